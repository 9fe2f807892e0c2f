//! Appliance recordings: PLAID-style CSV directories and synthetic signatures.
//!
//! On-disk layout of a recording directory:
//!
//! ```text
//! manifest.json   [{"file": "0001.csv", "label": "Fan", "sample_rate": 30000.0}, ...]
//! 0001.csv        current,voltage
//!                 0.013,-2.41
//!                 ...
//! ```
//!
//! `sample_rate` may be omitted and defaults to 30 kHz.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::rng;
use crate::signal::WaveformRecord;

pub const DEFAULT_PLAID_RATE: f64 = 30_000.0;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Records sharing one sample rate, each labelled with one of `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<WaveformRecord>,
    pub class_names: Vec<String>,
    pub sample_rate: f64,
}

impl LabeledDataset {
    pub fn new(
        records: Vec<WaveformRecord>,
        class_names: Vec<String>,
        sample_rate: f64,
    ) -> Result<Self> {
        let known: BTreeSet<&str> = class_names.iter().map(String::as_str).collect();
        if known.len() != class_names.len() {
            return Err(NilmError::invalid("duplicate class names"));
        }
        for (i, r) in records.iter().enumerate() {
            if !known.contains(r.label.as_str()) {
                return Err(NilmError::invalid(format!(
                    "record {i} has unknown label {:?}",
                    r.label
                )));
            }
            if r.sample_rate != sample_rate {
                return Err(NilmError::invalid(format!(
                    "record {i} sampled at {} Hz, dataset at {sample_rate} Hz",
                    r.sample_rate
                )));
            }
        }
        Ok(Self {
            records,
            class_names,
            sample_rate,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == label)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
}

fn default_rate() -> f64 {
    DEFAULT_PLAID_RATE
}

/// How raw manifest labels become class names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    /// Fixed class list (in output order). When absent, the sorted set of
    /// labels found in the manifest is used.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    /// Raw label → class name.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

impl ClassMap {
    fn resolve<'a>(&'a self, raw: &'a str) -> &'a str {
        self.aliases.get(raw).map(String::as_str).unwrap_or(raw)
    }
}

fn read_record_csv(path: &Path, label: &str, sample_rate: f64) -> Result<WaveformRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| NilmError::Parse {
            file: path.to_owned(),
            line: 0,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| NilmError::Parse {
            file: path.to_owned(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (ci, vi) = match (col("current"), col("voltage")) {
        (Some(c), Some(v)) => (c, v),
        _ => {
            return Err(NilmError::Parse {
                file: path.to_owned(),
                line: 1,
                msg: "header must name `current` and `voltage` columns".into(),
            })
        }
    };
    let mut current = Vec::new();
    let mut voltage = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| NilmError::Parse {
            file: path.to_owned(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| -> Result<f64> {
            let s = row.get(i).ok_or_else(|| NilmError::Parse {
                file: path.to_owned(),
                line,
                msg: format!("missing column {i}"),
            })?;
            s.parse::<f64>().map_err(|_| NilmError::Parse {
                file: path.to_owned(),
                line,
                msg: format!("non-numeric cell {s:?}"),
            })
        };
        current.push(cell(ci)?);
        voltage.push(cell(vi)?);
    }
    WaveformRecord::new(voltage, current, sample_rate, label).map_err(|e| NilmError::Parse {
        file: path.to_owned(),
        line: 0,
        msg: e.to_string(),
    })
}

/// Loads every recording listed in `dir/manifest.json`.
pub fn load_plaid_csv(dir: &Path, class_map: &ClassMap) -> Result<LabeledDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| NilmError::io(&manifest_path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| NilmError::Parse {
        file: manifest_path.clone(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    if entries.is_empty() {
        return Err(NilmError::Data(format!(
            "{} lists no recordings",
            manifest_path.display()
        )));
    }

    let class_names: Vec<String> = match &class_map.classes {
        Some(c) => c.clone(),
        None => entries
            .iter()
            .map(|e| class_map.resolve(&e.label).to_owned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    for e in &entries {
        let name = class_map.resolve(&e.label);
        if !class_names.iter().any(|c| c == name) {
            return Err(NilmError::Data(format!(
                "{}: label {:?} is not a known class",
                e.file, e.label
            )));
        }
    }
    let sample_rate = entries[0].sample_rate;
    if let Some(e) = entries.iter().find(|e| e.sample_rate != sample_rate) {
        return Err(NilmError::Data(format!(
            "{} sampled at {} Hz, expected {sample_rate} Hz",
            e.file, e.sample_rate
        )));
    }

    let records = entries
        .par_iter()
        .map(|e| read_record_csv(&dir.join(&e.file), class_map.resolve(&e.label), e.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(records, class_names, sample_rate)
}

/// Writes `dataset` in the layout [`load_plaid_csv`] reads.
pub fn write_plaid_dir(dataset: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NilmError::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, r) in dataset.records.iter().enumerate() {
        let file = format!("{i:05}.csv");
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| NilmError::Data(e.to_string()))?;
        w.write_record(["current", "voltage"])
            .map_err(|e| NilmError::Data(e.to_string()))?;
        for (c, v) in r.current.iter().zip(&r.voltage) {
            w.write_record([c.to_string(), v.to_string()])
                .map_err(|e| NilmError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| NilmError::io(&path, e))?;
        entries.push(ManifestEntry {
            file,
            label: r.label.clone(),
            sample_rate: r.sample_rate,
        });
    }
    let manifest: PathBuf = dir.join(MANIFEST_FILE);
    fs::write(&manifest, serde_json::to_string_pretty(&entries)?)
        .map_err(|e| NilmError::io(&manifest, e))
}

/// One harmonic of a synthetic current signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    /// Relative to the fundamental amplitude.
    pub amplitude: f64,
    /// Radians.
    pub phase: f64,
}

/// Parametric stand-in for a real appliance's steady-state current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSpec {
    pub class_name: String,
    /// Peak amperes of the fundamental.
    pub fundamental_amplitude: f64,
    pub harmonic_profile: Vec<Harmonic>,
    /// Radians; positive lags the voltage.
    pub power_factor_angle: f64,
    /// Amperes.
    pub noise_std: f64,
}

impl SignatureSpec {
    pub fn validate(&self) -> Result<()> {
        for h in &self.harmonic_profile {
            if h.order < 1 || !(h.amplitude >= 0.0) {
                return Err(NilmError::invalid(format!(
                    "{}: harmonic order must be >= 1 and amplitude >= 0",
                    self.class_name
                )));
            }
        }
        if !(self.noise_std >= 0.0) || !(self.fundamental_amplitude >= 0.0) {
            return Err(NilmError::invalid(format!(
                "{}: negative amplitude or noise",
                self.class_name
            )));
        }
        Ok(())
    }
}

/// Grid supply the synthetic recordings are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mains {
    pub frequency: f64,
    pub voltage_rms: f64,
}

impl Default for Mains {
    fn default() -> Self {
        Self {
            frequency: 60.0,
            voltage_rms: 120.0,
        }
    }
}

/// Generates one recording: an ideal mains voltage and the harmonic current
/// of `spec`, plus Gaussian noise.
pub fn synth_signature(
    spec: &SignatureSpec,
    duration: f64,
    sample_rate: f64,
    mains: Mains,
    rng_seed: u64,
) -> Result<WaveformRecord> {
    if !(duration > 0.0) {
        return Err(NilmError::invalid("duration must be positive"));
    }
    spec.validate()?;
    let n = (duration * sample_rate).round() as usize;
    let omega = 2.0 * PI * mains.frequency;
    let v_peak = mains.voltage_rms * 2f64.sqrt();
    let mut rng = rng::seeded(rng_seed);
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| NilmError::invalid(format!("noise std: {e}")))?;
    let mut voltage = Vec::with_capacity(n);
    let mut current = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / sample_rate;
        voltage.push(v_peak * (omega * t).sin());
        let shifted = omega * t - spec.power_factor_angle;
        let clean: f64 = spec
            .harmonic_profile
            .iter()
            .map(|h| h.amplitude * (h.order as f64 * shifted + h.phase).sin())
            .sum();
        let eps = if spec.noise_std > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        current.push(spec.fundamental_amplitude * clean + eps);
    }
    WaveformRecord::new(voltage, current, sample_rate, spec.class_name.clone())
}

const BANK_JSON: &str = include_str!("../assets/signature_bank.json");

/// The shipped 15-class signature bank.
pub fn default_signature_bank() -> Vec<SignatureSpec> {
    serde_json::from_str(BANK_JSON).expect("shipped signature bank is valid JSON")
}

pub fn load_signature_bank(path: &Path) -> Result<Vec<SignatureSpec>> {
    let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
    let bank: Vec<SignatureSpec> = serde_json::from_str(&text)?;
    for s in &bank {
        s.validate()?;
    }
    Ok(bank)
}

/// `records_per_class` recordings for each bank entry, each with its own
/// noise stream.
pub fn synth_dataset(
    bank: &[SignatureSpec],
    records_per_class: usize,
    duration: f64,
    sample_rate: f64,
    mains: Mains,
    seed: u64,
) -> Result<LabeledDataset> {
    if bank.is_empty() {
        return Err(NilmError::invalid("empty signature bank"));
    }
    let jobs: Vec<(usize, usize)> = (0..bank.len())
        .flat_map(|c| (0..records_per_class).map(move |r| (c, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(c, r)| {
            synth_signature(
                &bank[c],
                duration,
                sample_rate,
                mains,
                rng::derive_seed(seed, &[c as u64, r as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let names = bank.iter().map(|s| s.class_name.clone()).collect();
    LabeledDataset::new(records, names, sample_rate)
}
