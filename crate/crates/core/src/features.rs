//! Selectable feature extractors over aggregate windows, persisted as one
//! versioned JSON transform so evaluation reuses the training statistics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fitps_flat, fryze_decompose};
use crate::decomp::{apply_fusion, fit_fusion, FusionMode, FusionParams, FusionTransform};
use crate::error::{NilmError, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    #[default]
    Icpc,
    Ica,
    Pca,
    Fryze,
    FitpsFlat,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [Self::Icpc, Self::Ica, Self::Pca, Self::Fryze, Self::FitpsFlat];

    pub fn name(self) -> &'static str {
        match self {
            Self::Icpc => "icpc",
            Self::Ica => "ica",
            Self::Pca => "pca",
            Self::Fryze => "fryze",
            Self::FitpsFlat => "fitps-flat",
        }
    }

    fn fusion_mode(self) -> Option<FusionMode> {
        match self {
            Self::Icpc => Some(FusionMode::Icpc),
            Self::Ica => Some(FusionMode::Ica),
            Self::Pca => Some(FusionMode::Pca),
            Self::Fryze | Self::FitpsFlat => None,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = NilmError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| NilmError::Config(format!("unknown feature kind {s:?} (expected icpc|ica|pca|fryze|fitps-flat)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub fusion: FusionParams,
    /// Samples per period for FIT-PS rows.
    pub n_k: usize,
    /// Periods kept per window for FIT-PS.
    pub n_rows: usize,
}

/// Column statistics for the baseline transforms. Columns that never vary
/// are passed through centred with unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(NilmError::invalid("cannot fit a scaler on zero rows"));
        }
        let mean = x.mean_axis(Axis(0)).expect("rows checked").to_vec();
        let std = x
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    fn apply(&self, mut x: Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(NilmError::invalid(format!(
                "scaler expects {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        for mut row in x.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub artifact_version: u32,
    pub config_hash: String,
    pub kind: FeatureKind,
    pub options: FeatureOptions,
    pub input_len: usize,
    pub fusion: Option<FusionTransform>,
    pub scaler: Option<Scaler>,
}

fn rows_parallel(
    currents: ArrayView2<f64>,
    voltages: ArrayView2<f64>,
    width: usize,
    f: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = (0..currents.nrows())
        .into_par_iter()
        .map(|i| {
            let c = currents.row(i).to_vec();
            let v = voltages.row(i).to_vec();
            f(&v, &c).map_err(|e| NilmError::Data(format!("window {i}: {e}")))
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((currents.nrows(), width), flat).map_err(|e| NilmError::Data(e.to_string()))
}

impl FeaturePipeline {
    fn baseline_raw(&self, currents: ArrayView2<f64>, voltages: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = currents.ncols();
        match self.kind {
            FeatureKind::Fryze => rows_parallel(currents, voltages, 2 * n, |v, c| {
                let parts = fryze_decompose(v, c)?;
                Ok([parts.active, parts.non_active].concat())
            }),
            FeatureKind::FitpsFlat => {
                let (n_k, n_rows) = (self.options.n_k, self.options.n_rows);
                rows_parallel(currents, voltages, n_k * n_rows, |v, c| fitps_flat(v, c, n_k, n_rows))
            }
            _ => unreachable!("fusion kinds do not use baseline features"),
        }
    }

    fn check_input(&self, currents: &ArrayView2<f64>, voltages: &ArrayView2<f64>) -> Result<()> {
        if currents.dim() != voltages.dim() {
            return Err(NilmError::invalid("current and voltage matrices differ in shape"));
        }
        if currents.ncols() != self.input_len {
            return Err(NilmError::invalid(format!(
                "feature pipeline expects windows of {} samples, got {}",
                self.input_len,
                currents.ncols()
            )));
        }
        Ok(())
    }

    /// Fits on training windows and returns the training features.
    pub fn fit(
        kind: FeatureKind,
        options: FeatureOptions,
        config_hash: &str,
        currents: ArrayView2<f64>,
        voltages: ArrayView2<f64>,
    ) -> Result<(Self, Array2<f64>)> {
        let mut pipeline = Self {
            artifact_version: crate::ARTIFACT_VERSION,
            config_hash: config_hash.to_string(),
            kind,
            options,
            input_len: currents.ncols(),
            fusion: None,
            scaler: None,
        };
        pipeline.check_input(&currents, &voltages)?;
        let features = match kind.fusion_mode() {
            Some(mode) => {
                let (t, x) = fit_fusion(currents, mode, &options.fusion)?;
                pipeline.fusion = Some(t);
                x
            }
            None => {
                let raw = pipeline.baseline_raw(currents, voltages)?;
                let scaler = Scaler::fit(raw.view())?;
                let x = scaler.apply(raw)?;
                pipeline.scaler = Some(scaler);
                x
            }
        };
        Ok((pipeline, features))
    }

    pub fn apply(&self, currents: ArrayView2<f64>, voltages: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&currents, &voltages)?;
        match (&self.fusion, &self.scaler) {
            (Some(t), _) => apply_fusion(t, currents),
            (None, Some(s)) => s.apply(self.baseline_raw(currents, voltages)?),
            (None, None) => Err(NilmError::InvalidState("feature pipeline was never fitted".into())),
        }
    }

    pub fn output_dim(&self) -> usize {
        match (&self.fusion, &self.scaler) {
            (Some(t), _) => t.output_dim(),
            (None, Some(s)) => s.mean.len(),
            (None, None) => 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = io::read_json(path)?;
        if p.artifact_version != crate::ARTIFACT_VERSION {
            return Err(NilmError::Data(format!(
                "{}: artifact version {} is not supported",
                path.display(),
                p.artifact_version
            )));
        }
        Ok(p)
    }
}
