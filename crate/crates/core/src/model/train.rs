//! Mini-batch training with per-epoch evaluation and best-validation
//! checkpointing. Each epoch's shuffle and dropout draw from a stream
//! derived from `(seed, epoch)`, so a run resumed at epoch `e` continues
//! exactly as an uninterrupted one.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper};
use super::loss;
use super::network::{self, Mode};
use super::ClassifierParams;
use crate::error::{NilmError, Result};
use crate::eval;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 128,
            lr: 1e-2,
            seed: 0,
            adam: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(NilmError::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(NilmError::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Features and binary targets of one split.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView2<'a, f64>,
}

impl<'a> TrainData<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: ArrayView2<'a, f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(NilmError::invalid("empty split"));
        }
        if x.nrows() != y.nrows() {
            return Err(NilmError::invalid(format!(
                "{} feature rows but {} target rows",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Self { x, y })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub bce: f64,
    pub f1: f64,
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ClassifierParams,
    /// Completed epochs.
    pub epoch: usize,
    /// Parameters of the epoch with the best validation F1.
    pub best_values: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    pub fn new(params: ClassifierParams) -> Self {
        Self {
            best_values: params.values.clone(),
            params,
            epoch: 0,
            best_epoch: 0,
            best_val_f1: f64::NEG_INFINITY,
            history: Vec::new(),
        }
    }

    /// Parameters with the best-validation weights swapped in.
    pub fn best_params(&self) -> ClassifierParams {
        let mut p = self.params.clone();
        p.values.clone_from(&self.best_values);
        p
    }
}

/// Eval-mode BCE and sample-averaged F1 of `data`.
pub fn evaluate(params: &ClassifierParams, data: TrainData<'_>) -> Result<(f64, f64)> {
    let z = network::logits(params, data.x)?;
    let bce = loss::bce_loss(z.view(), data.y)?;
    let threshold = params.config.threshold;
    let pred = z.mapv(|v| u8::from(loss::sigmoid(v) > threshold));
    let truth = data.y.mapv(|v| v as u8);
    Ok((bce, eval::f1_mean(pred.view(), truth.view())?))
}

/// Runs epochs `state.epoch..cfg.epochs`.
pub fn train(
    mut state: TrainState,
    train: TrainData<'_>,
    val: TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<TrainState> {
    cfg.validate()?;
    let n = train.x.nrows();
    if n == 0 || val.x.nrows() == 0 {
        return Err(NilmError::invalid("empty split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut rng = rng::derived(cfg.seed, &[0x7261696e, epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.x.select(Axis(0), chunk);
            let yb = train.y.select(Axis(0), chunk);
            let (_, cache) = network::forward(&state.params, xb.view(), Mode::Train, &mut rng)?;
            let grads = network::backward(&state.params, &cache, yb.view())?;
            adam_step(&mut state.params, &grads.values, cfg.lr, cfg.adam).map_err(|e| match e {
                NilmError::Numeric(msg) => NilmError::Numeric(format!("epoch {}: {msg}", epoch + 1)),
                other => other,
            })?;
        }
        state.epoch += 1;
        let (train_bce, train_f1) = evaluate(&state.params, train)?;
        let (val_bce, val_f1) = evaluate(&state.params, val)?;
        state.history.push(HistoryRow {
            epoch: state.epoch,
            split: "train".into(),
            bce: train_bce,
            f1: train_f1,
        });
        state.history.push(HistoryRow {
            epoch: state.epoch,
            split: "val".into(),
            bce: val_bce,
            f1: val_f1,
        });
        if val_f1 > state.best_val_f1 {
            state.best_val_f1 = val_f1;
            state.best_epoch = state.epoch;
            state.best_values.clone_from(&state.params.values);
        }
    }
    Ok(state)
}
