//! Fused PCA + ICA features: project onto the leading principal components,
//! append the most sub-Gaussian independent components, standardise.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ica::{self, IcaModel, IcaParams, Nonlinearity};
use super::linalg;
use super::pca::{self, PcaModel};
use crate::error::{NilmError, Result};

/// Which blocks of the fused representation are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Icpc,
    Pca,
    Ica,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    /// `None`: smallest count explaining `variance_fraction`, capped at
    /// `max_components`.
    pub k_pca: Option<usize>,
    /// `None`: equal to `k_pca`.
    pub k_ica: Option<usize>,
    /// `None`: equal to `k_ica`.
    pub r: Option<usize>,
    pub variance_fraction: f64,
    pub max_components: usize,
    pub nonlinearity: Nonlinearity,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            k_pca: None,
            k_ica: None,
            r: None,
            variance_fraction: 0.95,
            max_components: 40,
            nonlinearity: Nonlinearity::Logcosh,
            max_iter: 400,
            tol: 1e-5,
            seed: 0,
        }
    }
}

/// Column-wise standardisation with population statistics.
pub fn standardize_fit(x: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if x.nrows() == 0 {
        return Err(NilmError::invalid("cannot standardise zero rows"));
    }
    let mean = linalg::column_means(x);
    let std = linalg::column_variances(x, 0.0).mapv(f64::sqrt);
    for (j, (&s, &mu)) in std.iter().zip(&mean).enumerate() {
        if !(s > 1e-12 * mu.abs().max(1.0)) {
            return Err(NilmError::invalid(format!(
                "feature column {j} has zero variance"
            )));
        }
    }
    Ok((mean, std))
}

pub fn standardize_apply(x: ArrayView2<f64>, mean: &[f64], std: &[f64]) -> Result<Array2<f64>> {
    if x.ncols() != mean.len() {
        return Err(NilmError::invalid(format!(
            "expected {} feature columns, got {}",
            mean.len(),
            x.ncols()
        )));
    }
    let mut out = x.to_owned();
    for (mut col, (&mu, &s)) in out.axis_iter_mut(Axis(1)).zip(mean.iter().zip(std)) {
        col.mapv_inplace(|v| (v - mu) / s);
    }
    Ok(out)
}

/// `[X_pca | X_ica]`, standardised. Returns the features and the statistics.
pub fn fuse_and_normalize(
    x_pca: ArrayView2<f64>,
    x_ica: ArrayView2<f64>,
) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>)> {
    if x_pca.nrows() != x_ica.nrows() {
        return Err(NilmError::invalid(format!(
            "PCA block has {} rows, ICA block {}",
            x_pca.nrows(),
            x_ica.nrows()
        )));
    }
    let fused = concatenate(Axis(1), &[x_pca, x_ica]).map_err(|e| NilmError::invalid(e.to_string()))?;
    let (mean, std) = standardize_fit(fused.view())?;
    let (mean, std) = (mean.to_vec(), std.to_vec());
    let out = standardize_apply(fused.view(), &mean, &std)?;
    Ok((out, mean, std))
}

/// Everything needed to map raw windows to normalised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionTransform {
    pub mode: FusionMode,
    pub params: FusionParams,
    pub k_pca: usize,
    pub k_ica: usize,
    /// Retained ICA components.
    pub r: usize,
    /// `mean` doubles as the centring vector for ICA.
    pub pca: PcaModel,
    pub ica: Option<IcaModel>,
    /// Component indices by ascending kurtosis.
    pub kurtosis_order: Vec<usize>,
    /// Kurtosis values matching `kurtosis_order`.
    pub kurtosis: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl FusionTransform {
    pub fn output_dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn input_dim(&self) -> usize {
        self.pca.n_features()
    }

    fn raw_features(&self, x_centered: ArrayView2<f64>) -> Result<Array2<f64>> {
        let pca_block = || pca::pca_transform(&self.pca, x_centered);
        let ica_block = || -> Result<Array2<f64>> {
            let model = self
                .ica
                .as_ref()
                .ok_or_else(|| NilmError::InvalidState("transform has no ICA model".into()))?;
            let z = ica::ica_transform(model, x_centered)?;
            Ok(z.select(Axis(1), &self.kurtosis_order[..self.r]))
        };
        match self.mode {
            FusionMode::Pca => pca_block(),
            FusionMode::Ica => ica_block(),
            FusionMode::Icpc => {
                let (p, i) = (pca_block()?, ica_block()?);
                concatenate(Axis(1), &[p.view(), i.view()]).map_err(|e| NilmError::invalid(e.to_string()))
            }
        }
    }
}

/// Fits PCA, FastICA, the kurtosis ranking and the normalisation statistics
/// on raw training rows. Returns the transform and the training features.
pub fn fit_fusion(
    x_raw: ArrayView2<f64>,
    mode: FusionMode,
    params: &FusionParams,
) -> Result<(FusionTransform, Array2<f64>)> {
    let (centred, mu) = pca::mean_center(x_raw)?;
    let (m, n) = centred.dim();
    let (values, vectors) = pca::pca_spectrum(centred.view())?;
    let k_pca = params.k_pca.unwrap_or_else(|| {
        pca::components_for_variance(&values, params.variance_fraction, params.max_components)
    });
    let max_rank = (m - 1).min(n);
    if k_pca < 1 || k_pca > max_rank {
        return Err(NilmError::invalid(format!("k_pca={k_pca} must lie in 1..={max_rank}")));
    }
    let pca_model = pca::model_from_spectrum(&values, &vectors, k_pca, mu.to_vec());

    let k_ica = params.k_ica.unwrap_or(k_pca);
    let r = params.r.unwrap_or(k_ica);
    let (ica_model, order, kurt, r) = if mode == FusionMode::Pca {
        (None, Vec::new(), Vec::new(), 0)
    } else {
        if r < 1 || r > k_ica {
            return Err(NilmError::invalid(format!("r={r} must lie in 1..={k_ica}")));
        }
        let ica_params = IcaParams {
            n_components: k_ica,
            nonlinearity: params.nonlinearity,
            max_iter: params.max_iter,
            tol: params.tol,
            seed: params.seed,
        };
        let model = ica::ica_fit(centred.view(), &ica_params)?;
        let z = ica::ica_transform(&model, centred.view())?;
        let ranked = ica::rank_select_ica(z.view(), r)?;
        (Some(model), ranked.order, ranked.kurtosis, r)
    };

    let mut transform = FusionTransform {
        mode,
        params: *params,
        k_pca,
        k_ica,
        r,
        pca: pca_model,
        ica: ica_model,
        kurtosis_order: order,
        kurtosis: kurt,
        feature_mean: Vec::new(),
        feature_std: Vec::new(),
    };
    let raw = transform.raw_features(centred.view())?;
    let (mean, std) = standardize_fit(raw.view())?;
    transform.feature_mean = mean.to_vec();
    transform.feature_std = std.to_vec();
    let features = standardize_apply(raw.view(), &transform.feature_mean, &transform.feature_std)?;
    Ok((transform, features))
}

/// Maps unseen raw rows with the fitted statistics; nothing is refitted.
pub fn apply_fusion(transform: &FusionTransform, x_raw: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_raw.ncols() != transform.input_dim() {
        return Err(NilmError::invalid(format!(
            "transform expects rows of {} samples, got {}",
            transform.input_dim(),
            x_raw.ncols()
        )));
    }
    let mu = ndarray::ArrayView1::from(&transform.pca.mean);
    let centred = &x_raw - &mu.insert_axis(Axis(0));
    let raw = transform.raw_features(centred.view())?;
    standardize_apply(raw.view(), &transform.feature_mean, &transform.feature_std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Uniform};

    fn data(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let sources = Array2::from_shape_simple_fn((m, 3), || u.sample(&mut r));
        let mix = Array2::from_shape_simple_fn((3, n), || u.sample(&mut r));
        sources.dot(&mix) + Array2::from_shape_simple_fn((m, n), || 0.01 * u.sample(&mut r))
    }

    fn fixed(k: usize) -> FusionParams {
        FusionParams {
            k_pca: Some(k),
            k_ica: Some(k),
            r: Some(k.min(2)),
            ..FusionParams::default()
        }
    }

    #[test]
    fn fused_width() {
        let a = Array2::from_shape_fn((5, 3), |(i, j)| (i * i + j) as f64);
        let b = Array2::from_shape_fn((5, 2), |(i, j)| ((i + 1) * (j + 2)) as f64 + (i % 2) as f64);
        let (f, mean, std) = fuse_and_normalize(a.view(), b.view()).unwrap();
        assert_eq!(f.ncols(), 5);
        assert_eq!((mean.len(), std.len()), (5, 5));
    }

    #[test]
    fn constant_column_named() {
        let a = Array2::from_shape_fn((4, 2), |(i, j)| if j == 1 { 3.0 } else { i as f64 });
        let b = Array2::from_shape_fn((4, 1), |(i, _)| i as f64 * 2.0);
        let err = fuse_and_normalize(a.view(), b.view()).unwrap_err().to_string();
        assert!(err.contains("column 1"), "{err}");
        assert!(fuse_and_normalize(a.view(), b.slice(ndarray::s![..3, ..])).is_err());
    }

    #[test]
    fn apply_reproduces_fit_output() {
        let x = data(300, 12, 1);
        let (t, feats) = fit_fusion(x.view(), FusionMode::Icpc, &fixed(3)).unwrap();
        assert_eq!(feats.ncols(), 3 + 2);
        assert_eq!(apply_fusion(&t, x.view()).unwrap(), feats);
        let one = apply_fusion(&t, x.slice(ndarray::s![7..8, ..])).unwrap();
        assert_eq!(one.dim(), (1, 5));
    }

    #[test]
    fn auto_dimensions() {
        let x = data(400, 10, 2);
        let (t, _) = fit_fusion(x.view(), FusionMode::Icpc, &FusionParams::default()).unwrap();
        // three sources dominate the variance
        assert_eq!(t.k_pca, 3);
        assert_eq!((t.k_ica, t.r), (3, 3));
        assert_eq!(t.output_dim(), 6);
    }

    #[test]
    fn modes_change_width() {
        let x = data(300, 8, 3);
        let (p, _) = fit_fusion(x.view(), FusionMode::Pca, &fixed(3)).unwrap();
        let (i, _) = fit_fusion(x.view(), FusionMode::Ica, &fixed(3)).unwrap();
        assert_eq!(p.output_dim(), 3);
        assert!(p.ica.is_none());
        assert_eq!(i.output_dim(), 2);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let x = data(200, 6, 4);
        let (t, _) = fit_fusion(x.view(), FusionMode::Icpc, &fixed(2)).unwrap();
        let back: FusionTransform = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
