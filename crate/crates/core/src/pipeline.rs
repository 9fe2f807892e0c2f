//! Config-driven `generate`, `train`, `eval` and `report` commands.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! dataset/   currents.bin voltages.bin aggregates.json manifest.json
//! model/     checkpoint.bin transform.json history.csv
//! eval/      per_class.csv per_k.csv summary.json predictions.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::decomp::FusionParams;
use crate::error::{NilmError, Result};
use crate::eval::{self, MetricsReport, PredictionSet};
use crate::features::{FeatureKind, FeatureOptions, FeaturePipeline};
use crate::ingest::{self, ClassMap, LabeledDataset, Mains};
use crate::io;
use crate::mixer::{self, AggregateSet, MixConfig, Split, SPLIT_FRACTIONS};
use crate::model::checkpoint::Checkpoint;
use crate::model::train::{self as trainer, TrainData, TrainState};
use crate::model::{self, AdamHyper, ClassifierParams, ResFfnConfig, TrainConfig};
use crate::rng;
use crate::signal;

pub const THREADS_ENV: &str = "NILM_FUSION_THREADS";
pub const DATASET_MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRANSFORM_FILE: &str = "transform.json";
pub const HISTORY_FILE: &str = "history.csv";

const TAG_SPLIT: u64 = 0x73706c6974;
const TAG_MIX: u64 = 0x6d6978;
const TAG_INIT: u64 = 0x696e6974;
const TAG_TRAIN: u64 = 0x7472;
const TAG_SYNTH: u64 = 0x73796e;
const TAG_FUSION: u64 = 0x667573;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSource {
    /// Signature bank JSON; the shipped bank when absent.
    pub bank: Option<PathBuf>,
    /// Use only the first `n` bank entries.
    pub n_classes: Option<usize>,
    pub records_per_class: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub voltage_rms: f64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            bank: None,
            n_classes: None,
            records_per_class: 10,
            duration_s: 1.0,
            sample_rate: ingest::DEFAULT_PLAID_RATE,
            voltage_rms: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaidSource {
    pub dir: PathBuf,
    #[serde(default)]
    pub classes: ClassMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceConfig {
    Synthetic(SyntheticSource),
    Plaid(PlaidSource),
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synthetic(SyntheticSource::default())
    }
}

/// Mixing parameters; the random stream comes from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSection {
    pub n_min: usize,
    pub n_max: usize,
    pub f_min: usize,
    pub f_max: usize,
    /// Aggregates per k over all splits, divided 70/10/20.
    pub samples_per_k: usize,
    pub noise_std: f64,
}

impl Default for MixSection {
    fn default() -> Self {
        let m = MixConfig::default();
        Self {
            n_min: m.n_min,
            n_max: m.n_max,
            f_min: m.f_min,
            f_max: m.f_max,
            samples_per_k: 500,
            noise_std: m.noise_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_blocks: usize,
    /// Derived from the parameter budget when absent.
    pub hidden_dim: Option<usize>,
    pub dropout_p: f64,
    pub threshold: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ResFfnConfig::default();
        Self {
            n_blocks: d.n_blocks,
            hidden_dim: None,
            dropout_p: d.dropout_p,
            threshold: d.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam: AdamHyper,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            adam: t.adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub source: SourceConfig,
    pub resample_rate: f64,
    pub mains_hz: f64,
    pub periods_per_window: usize,
    pub mix: MixSection,
    pub features: FeatureKind,
    pub fusion: FusionParams,
    pub model: ModelSection,
    pub train: TrainSection,
    /// Not part of the config hash.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            source: SourceConfig::default(),
            resample_rate: 3000.0,
            mains_hz: 60.0,
            periods_per_window: 10,
            mix: MixSection::default(),
            features: FeatureKind::Icpc,
            fusion: FusionParams::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            out_dir: PathBuf::from("nilm-out"),
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    /// Reads a JSON or TOML (by `.toml` extension) file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| NilmError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(NilmError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("resample_rate", self.resample_rate)?;
        positive("mains_hz", self.mains_hz)?;
        if self.periods_per_window < 2 {
            return Err(NilmError::Config("periods_per_window must be at least 2".into()));
        }
        self.mix_config(Split::Train).validate(usize::MAX)?;
        if self.mix.samples_per_k == 0 {
            return Err(NilmError::Config("samples_per_k must be positive".into()));
        }
        self.train_config().validate()?;
        if self.model.n_blocks < 1 {
            return Err(NilmError::Config("n_blocks must be at least 1".into()));
        }
        if let SourceConfig::Synthetic(s) = &self.source {
            positive("source.duration_s", s.duration_s)?;
            positive("source.sample_rate", s.sample_rate)?;
            if s.records_per_class < 3 {
                return Err(NilmError::Config("source.records_per_class must be at least 3".into()));
            }
        }
        Ok(())
    }

    fn canonical(&self, drop: &[&str]) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("config serializes to an object");
        obj.remove("out_dir");
        for path in drop {
            let mut parts = path.split('.');
            let first = parts.next().expect("non-empty path");
            if let (Some(second), Some(Value::Object(inner))) = (parts.next(), obj.get_mut(first)) {
                inner.remove(second);
            } else {
                obj.remove(first);
            }
        }
        Ok(v)
    }

    /// SHA-256 of the canonical JSON form (sorted keys, output dir removed).
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(&self.canonical(&[])?)?.as_bytes()))
    }

    /// Hash ignoring the epoch budget, so a run may be resumed with more epochs.
    pub fn resume_key(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(&self.canonical(&["train.epochs"])?)?.as_bytes()))
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join("dataset")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join("model")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join("eval")
    }

    fn mix_config(&self, split: Split) -> MixConfig {
        let frac = SPLIT_FRACTIONS[split as usize];
        MixConfig {
            n_min: self.mix.n_min,
            n_max: self.mix.n_max,
            f_min: self.mix.f_min,
            f_max: self.mix.f_max,
            samples_per_k: ((self.mix.samples_per_k as f64 * frac).round() as usize).max(1),
            rng_seed: rng::derive_seed(self.seed, &[TAG_MIX, split.tag()]),
            noise_std: self.mix.noise_std,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            seed: rng::derive_seed(self.seed, &[TAG_TRAIN]),
            adam: self.train.adam,
        }
    }

    fn feature_options(&self) -> FeatureOptions {
        let mut fusion = self.fusion;
        fusion.seed = rng::derive_seed(self.seed, &[TAG_FUSION, self.fusion.seed]);
        FeatureOptions {
            fusion,
            n_k: (self.resample_rate / self.mains_hz).round() as usize,
            n_rows: self.periods_per_window - 1,
        }
    }

    fn network_config(&self, input_dim: usize, n_classes: usize) -> ResFfnConfig {
        let hidden_dim = self.model.hidden_dim.unwrap_or_else(|| {
            model::derive_hidden_dim(input_dim, self.model.n_blocks, n_classes, model::TARGET_PARAMS)
        });
        ResFfnConfig {
            input_dim,
            hidden_dim,
            n_blocks: self.model.n_blocks,
            n_classes,
            dropout_p: self.model.dropout_p,
            threshold: self.model.threshold,
        }
    }
}

/// Maps an error to the process exit code: 2 configuration, 3 data, 4 numeric.
pub fn exit_code(err: &NilmError) -> i32 {
    match err {
        NilmError::Config(_) | NilmError::InvalidArgument(_) | NilmError::Unsupported(_) => 2,
        NilmError::Numeric(_) => 4,
        NilmError::Data(_)
        | NilmError::Parse { .. }
        | NilmError::Io { .. }
        | NilmError::Json(_)
        | NilmError::InvalidState(_) => 3,
    }
}

/// Caps the global rayon pool at `NILM_FUSION_THREADS` when set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| NilmError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // a pool already built by an earlier call is left as is
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_source(cfg: &RunConfig) -> Result<LabeledDataset> {
    match &cfg.source {
        SourceConfig::Plaid(p) => ingest::load_plaid_csv(&p.dir, &p.classes),
        SourceConfig::Synthetic(s) => {
            let mut bank = match &s.bank {
                Some(path) => ingest::load_signature_bank(path)?,
                None => ingest::default_signature_bank(),
            };
            if let Some(n) = s.n_classes {
                if n == 0 || n > bank.len() {
                    return Err(NilmError::Config(format!(
                        "source.n_classes={n} must lie in 1..={}",
                        bank.len()
                    )));
                }
                bank.truncate(n);
            }
            let mains = Mains {
                frequency: cfg.mains_hz,
                voltage_rms: s.voltage_rms,
            };
            ingest::synth_dataset(
                &bank,
                s.records_per_class,
                s.duration_s,
                s.sample_rate,
                mains,
                rng::derive_seed(cfg.seed, &[TAG_SYNTH]),
            )
        }
    }
}

/// Resamples and cuts the given records into analysis windows.
fn windowed(cfg: &RunConfig, source: &LabeledDataset, records: &[usize]) -> Result<LabeledDataset> {
    let windows = records
        .par_iter()
        .map(|&i| {
            let r = &source.records[i];
            let r = if r.sample_rate == cfg.resample_rate {
                r.clone()
            } else {
                signal::resample(r, cfg.resample_rate)?
            };
            signal::extract_windows(&r, cfg.periods_per_window, cfg.mains_hz)
        })
        .collect::<Result<Vec<_>>>()?;
    let windows: Vec<_> = windows.into_iter().flatten().collect();
    LabeledDataset::new(windows, source.class_names.clone(), cfg.resample_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub source_records: usize,
    pub windows: usize,
    pub aggregates: usize,
    pub per_k: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub artifact_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub window_len: usize,
    pub windows_before_mixing: usize,
    pub aggregates_after_mixing: usize,
    pub per_k: BTreeMap<usize, usize>,
    pub splits: BTreeMap<String, SplitCounts>,
}

/// Builds, splits and mixes the dataset, then writes it to `out_dir/dataset`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let source = load_source(cfg)?;
    cfg.mix_config(Split::Train).validate(source.n_classes())?;
    let parts = mixer::split_records(&source, rng::derive_seed(cfg.seed, &[TAG_SPLIT]))?;
    let window_len = signal::window_len(cfg.resample_rate, cfg.mains_hz, cfg.periods_per_window);

    let mut set = AggregateSet {
        artifact_version: crate::ARTIFACT_VERSION,
        config_hash: hash.clone(),
        seed: cfg.seed,
        class_names: source.class_names.clone(),
        sample_rate: cfg.resample_rate,
        window_len,
        labels: Vec::new(),
        k: Vec::new(),
        split: Vec::new(),
        constituents: Vec::new(),
        config: serde_json::to_value(cfg)?,
        currents: Vec::new(),
        voltages: Vec::new(),
    };
    set.config.as_object_mut().expect("object").remove("out_dir");

    let mut splits = BTreeMap::new();
    let mut per_k_total = BTreeMap::new();
    let mut windows_total = 0;
    for split in Split::ALL {
        let records = &parts[split as usize];
        let windows = windowed(cfg, &source, records)?;
        for (c, name) in windows.class_names.iter().enumerate() {
            if !windows.records.iter().any(|r| r.label == *name) {
                return Err(NilmError::Data(format!(
                    "class {name:?} (index {c}) has no complete {}-period window in the {} split",
                    cfg.periods_per_window,
                    split.as_str()
                )));
            }
        }
        let samples = mixer::generate_dataset(&windows, &cfg.mix_config(split))?;
        // window offsets inside this split become global source-window ids
        let offset = windows_total;
        let mut per_k = BTreeMap::new();
        let n_agg = samples.len();
        for mut s in samples {
            *per_k.entry(s.k).or_insert(0) += 1;
            *per_k_total.entry(s.k).or_insert(0) += 1;
            for c in s.constituents.iter_mut() {
                *c += offset;
            }
            set.push(s, split)?;
        }
        windows_total += windows.len();
        splits.insert(
            split.as_str().to_string(),
            SplitCounts {
                source_records: records.len(),
                windows: windows.len(),
                aggregates: n_agg,
                per_k,
            },
        );
    }

    let dir = cfg.dataset_dir();
    set.save(&dir)?;
    let manifest = DatasetManifest {
        artifact_version: crate::ARTIFACT_VERSION,
        config_hash: hash,
        seed: cfg.seed,
        class_names: set.class_names.clone(),
        window_len,
        windows_before_mixing: windows_total,
        aggregates_after_mixing: set.len(),
        per_k: per_k_total,
        splits,
    };
    io::write_json(&dir.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Current and voltage windows plus labels of `rows`.
pub fn split_matrices(set: &AggregateSet, rows: &[usize]) -> (Array2<f64>, Array2<f64>, Array2<u8>) {
    let n = set.window_len;
    let c = Array2::from_shape_fn((rows.len(), n), |(i, j)| set.current(rows[i])[j]);
    let v = Array2::from_shape_fn((rows.len(), n), |(i, j)| set.voltage(rows[i])[j]);
    let y = Array2::from_shape_fn((rows.len(), set.class_names.len()), |(i, j)| set.labels[rows[i]][j]);
    (c, v, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub param_count: usize,
    pub input_dim: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

fn write_history(path: &Path, state: &TrainState) -> Result<()> {
    let csv_err = |e: csv::Error| NilmError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in &state.history {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| NilmError::io(path, e))
}

fn save_atomic(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let tmp = path.with_extension("bin.tmp");
    ckpt.save(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| NilmError::io(path, e))
}

/// Fits the feature transform on the training split and trains the
/// classifier, checkpointing after every epoch. With `resume`, continues from
/// an existing checkpoint written under a compatible config.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let resume_key = cfg.resume_key()?;
    let set = AggregateSet::load(&cfg.dataset_dir())?;
    let model_dir = cfg.model_dir();
    io::ensure_dir(&model_dir)?;

    let (tc, tv, ty) = split_matrices(&set, &set.rows_in(Split::Train));
    let (vc, vv, vy) = split_matrices(&set, &set.rows_in(Split::Val));
    if ty.nrows() == 0 || vy.nrows() == 0 {
        return Err(NilmError::Data("dataset needs non-empty train and val splits".into()));
    }
    let (pipeline, x_train) = FeaturePipeline::fit(cfg.features, cfg.feature_options(), &hash, tc.view(), tv.view())?;
    let x_val = pipeline.apply(vc.view(), vv.view())?;
    pipeline.save(&model_dir.join(TRANSFORM_FILE))?;
    let (y_train, y_val) = (ty.mapv(f64::from), vy.mapv(f64::from));

    let net = cfg.network_config(x_train.ncols(), set.class_names.len());
    net.validate()?;
    let ckpt_path = model_dir.join(CHECKPOINT_FILE);
    let mut state = if resume && ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if ckpt.meta.get("resume_key").and_then(Value::as_str) != Some(resume_key.as_str()) {
            return Err(NilmError::Config(format!(
                "{} was written under a different configuration; cannot resume",
                ckpt_path.display()
            )));
        }
        if ckpt.state.params.config != net {
            return Err(NilmError::Data("checkpoint network shape differs from config".into()));
        }
        ckpt.state
    } else {
        TrainState::new(ClassifierParams::init(net, rng::derive_seed(cfg.seed, &[TAG_INIT]))?)
    };

    let meta = json!({
        "config_hash": hash,
        "dataset_config_hash": set.config_hash,
        "resume_key": resume_key,
        "features": cfg.features.name(),
        "seed": cfg.seed,
    });
    let train_data = TrainData::new(x_train.view(), y_train.view())?;
    let val_data = TrainData::new(x_val.view(), y_val.view())?;
    let mut tcfg = cfg.train_config();
    let target = tcfg.epochs;
    while state.epoch < target {
        tcfg.epochs = state.epoch + 1;
        state = trainer::train(state, train_data, val_data, &tcfg)?;
        save_atomic(
            &Checkpoint {
                state: state.clone(),
                meta: meta.clone(),
            },
            &ckpt_path,
        )?;
    }
    if !ckpt_path.exists() || state.epoch == 0 {
        save_atomic(&Checkpoint { state: state.clone(), meta }, &ckpt_path)?;
    }
    write_history(&model_dir.join(HISTORY_FILE), &state)?;
    Ok(TrainSummary {
        param_count: net.param_count(),
        input_dim: net.input_dim,
        epochs_run: state.epoch,
        best_epoch: state.best_epoch,
        best_val_f1: state.best_val_f1,
    })
}

/// Artifact locations for `eval`; unset entries follow the config layout.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub checkpoint: Option<PathBuf>,
    pub transform: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: Option<Split>,
    pub override_hash_check: bool,
}

/// Predicts the chosen split (test by default) with the best-validation
/// weights and writes reports plus raw predictions to `out_dir/eval`.
pub fn cmd_eval(cfg: &RunConfig, inputs: &EvalInputs) -> Result<MetricsReport> {
    let ckpt_path = inputs.checkpoint.clone().unwrap_or_else(|| cfg.model_dir().join(CHECKPOINT_FILE));
    let transform_path = inputs.transform.clone().unwrap_or_else(|| cfg.model_dir().join(TRANSFORM_FILE));
    let dataset_dir = inputs.dataset.clone().unwrap_or_else(|| cfg.dataset_dir());
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let transform = FeaturePipeline::load(&transform_path)?;
    let set = AggregateSet::load(&dataset_dir)?;

    let meta_str = |key: &str| ckpt.meta.get(key).and_then(Value::as_str).unwrap_or("").to_string();
    let ckpt_hash = meta_str("config_hash");
    let mut mismatches = Vec::new();
    if transform.config_hash != ckpt_hash {
        mismatches.push(format!(
            "transform config hash {} != checkpoint {}",
            transform.config_hash, ckpt_hash
        ));
    }
    if meta_str("dataset_config_hash") != set.config_hash {
        mismatches.push(format!(
            "checkpoint was trained on dataset {} but {} holds {}",
            meta_str("dataset_config_hash"),
            dataset_dir.display(),
            set.config_hash
        ));
    }
    if !mismatches.is_empty() && !inputs.override_hash_check {
        return Err(NilmError::Data(format!(
            "incompatible artifacts ({}); pass --override-hash-check to evaluate anyway",
            mismatches.join("; ")
        )));
    }

    let split = inputs.split.unwrap_or(Split::Test);
    let rows = set.rows_in(split);
    if rows.is_empty() {
        return Err(NilmError::Data(format!("dataset has no {} rows", split.as_str())));
    }
    let (c, v, truth) = split_matrices(&set, &rows);
    let x = transform.apply(c.view(), v.view())?;
    let params = ckpt.state.best_params();
    let (probs, pred) = model::predict(&params, x.view(), params.config.threshold)?;

    let preds = PredictionSet {
        artifact_version: crate::ARTIFACT_VERSION,
        config_hash: ckpt_hash,
        seed: ckpt.meta.get("seed").and_then(Value::as_u64).unwrap_or(cfg.seed),
        class_names: set.class_names.clone(),
        threshold: params.config.threshold,
        k: rows.iter().map(|&r| set.k[r]).collect(),
        truth: truth.outer_iter().map(|r| r.to_vec()).collect(),
        pred: pred.outer_iter().map(|r| r.to_vec()).collect(),
        probs: probs.outer_iter().map(|r| r.to_vec()).collect(),
    };
    let dir = cfg.eval_dir();
    io::ensure_dir(&dir)?;
    preds.save(&dir.join(eval::PREDICTIONS_FILE))?;
    eval::write_report(&dir, &preds)
}

/// Recomputes every report file from a persisted predictions file.
pub fn cmd_report(predictions: &Path, out: &Path) -> Result<MetricsReport> {
    let preds = PredictionSet::load(predictions)?;
    eval::write_report(out, &preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn resume_key_ignores_epochs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.train.epochs = 3;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.resume_key().unwrap(), b.resume_key().unwrap());
        b.train.lr = 0.5;
        assert_ne!(a.resume_key().unwrap(), b.resume_key().unwrap());
    }

    #[test]
    fn json_and_toml_configs_agree() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        let t = dir.path().join("c.toml");
        fs::write(&j, r#"{"seed": 9, "mix": {"n_max": 4}, "source": {"kind": "synthetic", "n_classes": 4}}"#).unwrap();
        fs::write(&t, "seed = 9\n[mix]\nn_max = 4\n[source]\nkind = \"synthetic\"\nn_classes = 4\n").unwrap();
        let a = RunConfig::from_file(&j).unwrap();
        let b = RunConfig::from_file(&t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mix.n_max, 4);
        assert_eq!(a.mix.f_max, 10);
    }

    #[test]
    fn unknown_field_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        fs::write(&j, r#"{"sed": 1}"#).unwrap();
        let e = RunConfig::from_file(&j).unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn invalid_mix_names_field() {
        let mut c = RunConfig::default();
        c.mix.f_min = 5;
        c.mix.f_max = 2;
        let e = c.validate().unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("f_min"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&NilmError::Numeric("x".into())), 4);
        assert_eq!(exit_code(&NilmError::Data("x".into())), 3);
        assert_eq!(exit_code(&NilmError::Config("x".into())), 2);
    }
}
