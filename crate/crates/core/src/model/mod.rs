//! Residual feed-forward multi-label classifier.
//!
//! ```text
//! h0 = W_in x + b_in
//! h  = LayerNorm(h + Dropout(W2 ReLU(W1 h + b1) + b2))      (n_blocks times)
//! y  = W_o h + b_o                                          (one logit per class)
//! ```
//!
//! All parameters live in one flat `Vec<f64>` whose layout is fixed by
//! [`ParamLayout`]; matrices are row-major `out × in`.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod train;

use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::rng;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use loss::{bce_loss, sigmoid};
pub use network::{backward, forward, logits, predict, ForwardCache, Gradients, Mode};
pub use train::{train, HistoryRow, TrainConfig, TrainData, TrainState};

/// Parameter budget the hidden width is sized against.
pub const TARGET_PARAMS: usize = 65_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResFfnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub n_classes: usize,
    pub dropout_p: f64,
    pub threshold: f64,
}

impl Default for ResFfnConfig {
    /// 18 blocks, 15 classes and an 80-wide input (40 PCA + 40 ICA
    /// features, the fusion caps).
    fn default() -> Self {
        Self::with_derived_width(80, 15)
    }
}

impl ResFfnConfig {
    /// Default depth, dropout and threshold with the hidden width chosen so
    /// the parameter count lands closest to [`TARGET_PARAMS`].
    pub fn with_derived_width(input_dim: usize, n_classes: usize) -> Self {
        let n_blocks = 18;
        Self {
            input_dim,
            hidden_dim: derive_hidden_dim(input_dim, n_blocks, n_classes, TARGET_PARAMS),
            n_blocks,
            n_classes,
            dropout_p: 0.1,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.n_classes == 0 {
            return Err(NilmError::Config("network dimensions must be positive".into()));
        }
        if self.n_blocks < 1 {
            return Err(NilmError::Config("n_blocks must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NilmError::Config(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(NilmError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        ParamLayout::new(self).len()
    }
}

pub fn param_count_for(input_dim: usize, hidden: usize, n_blocks: usize, n_classes: usize) -> usize {
    (input_dim * hidden + hidden) + n_blocks * (2 * hidden * hidden + 4 * hidden) + (n_classes * hidden + n_classes)
}

/// Width whose total parameter count is closest to `target` (smaller width
/// on ties).
pub fn derive_hidden_dim(input_dim: usize, n_blocks: usize, n_classes: usize, target: usize) -> usize {
    (1..=4096)
        .min_by_key(|&w| param_count_for(input_dim, w, n_blocks, n_classes).abs_diff(target))
        .unwrap_or(1)
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub input_w: Range<usize>,
    pub input_b: Range<usize>,
    pub blocks: Vec<BlockLayout>,
    pub output_w: Range<usize>,
    pub output_b: Range<usize>,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub ln_gain: Range<usize>,
    pub ln_bias: Range<usize>,
}

impl ParamLayout {
    pub fn new(cfg: &ResFfnConfig) -> Self {
        let mut at = 0usize;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (d, h, c) = (cfg.input_dim, cfg.hidden_dim, cfg.n_classes);
        let input_w = take(h * d);
        let input_b = take(h);
        let blocks = (0..cfg.n_blocks)
            .map(|_| BlockLayout {
                w1: take(h * h),
                b1: take(h),
                w2: take(h * h),
                b2: take(h),
                ln_gain: take(h),
                ln_bias: take(h),
            })
            .collect();
        let output_w = take(c * h);
        let output_b = take(c);
        Self {
            input_w,
            input_b,
            blocks,
            output_w,
            output_b,
            len: at,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Named tensor groups, in storage order.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![
            ("input.weight".to_string(), self.input_w.clone()),
            ("input.bias".to_string(), self.input_b.clone()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.fc1.weight"), b.w1.clone()));
            out.push((format!("block{i}.fc1.bias"), b.b1.clone()));
            out.push((format!("block{i}.fc2.weight"), b.w2.clone()));
            out.push((format!("block{i}.fc2.bias"), b.b2.clone()));
            out.push((format!("block{i}.norm.gain"), b.ln_gain.clone()));
            out.push((format!("block{i}.norm.bias"), b.ln_bias.clone()));
        }
        out.push(("output.weight".to_string(), self.output_w.clone()));
        out.push(("output.bias".to_string(), self.output_b.clone()));
        out
    }
}

/// Weights, biases and optimiser state of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub config: ResFfnConfig,
    pub values: Vec<f64>,
    pub adam: AdamState,
}

impl ClassifierParams {
    /// Fan-in uniform weights, zero biases, identity layer norms.
    pub fn init(config: ResFfnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut values = vec![0.0; layout.len()];
        let mut rng = rng::derived(seed, &[0x1417]);
        let mut fill = |range: &Range<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut values[range.clone()] {
                *v = rng.random_range(-bound..bound);
            }
        };
        fill(&layout.input_w, config.input_dim);
        for b in &layout.blocks {
            fill(&b.w1, config.hidden_dim);
            fill(&b.w2, config.hidden_dim);
        }
        fill(&layout.output_w, config.hidden_dim);
        for b in &layout.blocks {
            values[b.ln_gain.clone()].fill(1.0);
        }
        let n = values.len();
        Ok(Self {
            config,
            values,
            adam: AdamState::zeros(n),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.layout().len();
        if self.values.len() != n || self.adam.m.len() != n || self.adam.v.len() != n {
            return Err(NilmError::InvalidState(format!(
                "parameter vector of {} entries does not match layout of {n}",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(NilmError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }
}
