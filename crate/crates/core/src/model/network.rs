//! Forward and backward passes over a batch (rows are samples).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::loss::{self, sigmoid};
use super::{ClassifierParams, ParamLayout};
use crate::error::{NilmError, Result};
use crate::rng::Rng;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn matrix<'a>(values: &'a [f64], range: &std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &values[range.clone()]).expect("layout matches config")
}

fn vector<'a>(values: &'a [f64], range: &std::ops::Range<usize>) -> ArrayView1<'a, f64> {
    ArrayView1::from(&values[range.clone()])
}

/// `x Wᵀ + b`
fn dense(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += &b.insert_axis(Axis(0));
    y
}

/// Row-wise layer normalisation. Returns the output, the normalised input
/// and the per-row inverse standard deviation.
fn layer_norm(
    s: &Array2<f64>,
    gain: ArrayView1<f64>,
    bias: ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let width = s.ncols() as f64;
    let mut xhat = s.clone();
    let mut inv_std = Array1::zeros(s.nrows());
    for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / width;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let i = *inv;
        row.mapv_inplace(|v| (v - mean) * i);
    }
    let mut out = &xhat * &gain.insert_axis(Axis(0));
    out += &bias.insert_axis(Axis(0));
    (out, xhat, inv_std)
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array2<f64>,
    pre_relu: Array2<f64>,
    hidden: Array2<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)); `None` when inactive.
    mask: Option<Array2<f64>>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Activations recorded by a forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    blocks: Vec<BlockCache>,
    last_hidden: Array2<f64>,
    pub logits: Array2<f64>,
    /// Optimiser step of the parameters the cache was built from.
    step: u64,
    n_params: usize,
}

impl ForwardCache {
    /// Dropout masks, one per block.
    pub fn masks(&self) -> Vec<Option<Array2<f64>>> {
        self.blocks.iter().map(|b| b.mask.clone()).collect()
    }
}

enum Dropout<'a> {
    Off,
    Sample(&'a mut Rng, f64),
    Fixed(&'a [Option<Array2<f64>>]),
}

fn run(
    params: &ClassifierParams,
    x: ArrayView2<f64>,
    mut dropout: Dropout<'_>,
    record: bool,
) -> Result<(Array2<f64>, Option<ForwardCache>)> {
    let cfg = &params.config;
    if x.ncols() != cfg.input_dim {
        return Err(NilmError::invalid(format!(
            "network expects {} input features, got {}",
            cfg.input_dim,
            x.ncols()
        )));
    }
    params.check()?;
    let layout = ParamLayout::new(cfg);
    let v = &params.values;
    let (d, h, c) = (cfg.input_dim, cfg.hidden_dim, cfg.n_classes);

    let mut state = dense(x, matrix(v, &layout.input_w, h, d), vector(v, &layout.input_b));
    let mut blocks = Vec::with_capacity(if record { cfg.n_blocks } else { 0 });
    for (bi, bl) in layout.blocks.iter().enumerate() {
        let pre_relu = dense(state.view(), matrix(v, &bl.w1, h, h), vector(v, &bl.b1));
        let hidden = pre_relu.mapv(|a| a.max(0.0));
        let mut branch = dense(hidden.view(), matrix(v, &bl.w2, h, h), vector(v, &bl.b2));
        let mask = match &mut dropout {
            Dropout::Off => None,
            Dropout::Sample(rng, p) => {
                let keep = 1.0 - *p;
                let scale = 1.0 / keep;
                let m = Array2::from_shape_simple_fn(branch.dim(), || {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                });
                Some(m)
            }
            Dropout::Fixed(masks) => masks.get(bi).cloned().flatten(),
        };
        if let Some(m) = &mask {
            if m.dim() != branch.dim() {
                return Err(NilmError::InvalidState("dropout mask shape mismatch".into()));
            }
            branch *= m;
        }
        let summed = branch + &state;
        let (out, xhat, inv_std) = layer_norm(&summed, vector(v, &bl.ln_gain), vector(v, &bl.ln_bias));
        if record {
            blocks.push(BlockCache {
                input: std::mem::replace(&mut state, out),
                pre_relu,
                hidden,
                mask,
                xhat,
                inv_std,
            });
        } else {
            state = out;
        }
    }
    let logits = dense(state.view(), matrix(v, &layout.output_w, c, h), vector(v, &layout.output_b));
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(NilmError::Numeric("non-finite logits".into()));
    }
    let cache = record.then(|| ForwardCache {
        input: x.to_owned(),
        blocks,
        last_hidden: state,
        logits: logits.clone(),
        step: params.adam.step,
        n_params: params.values.len(),
    });
    Ok((logits, cache))
}

/// Forward pass recording activations. Dropout is sampled from `rng` in
/// train mode only; eval mode is deterministic.
pub fn forward(
    params: &ClassifierParams,
    x: ArrayView2<f64>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Array2<f64>, ForwardCache)> {
    let p = params.config.dropout_p;
    let dropout = if mode == Mode::Train && p > 0.0 {
        Dropout::Sample(rng, p)
    } else {
        Dropout::Off
    };
    let (logits, cache) = run(params, x, dropout, true)?;
    Ok((logits, cache.expect("recorded")))
}

/// Forward pass replaying previously drawn dropout masks.
pub fn forward_with_masks(
    params: &ClassifierParams,
    x: ArrayView2<f64>,
    masks: &[Option<Array2<f64>>],
) -> Result<(Array2<f64>, ForwardCache)> {
    let (logits, cache) = run(params, x, Dropout::Fixed(masks), true)?;
    Ok((logits, cache.expect("recorded")))
}

/// Eval-mode logits without keeping activations.
pub fn logits(params: &ClassifierParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(run(params, x, Dropout::Off, false)?.0)
}

/// Sigmoid probabilities and labels (`1` iff probability `> threshold`).
pub fn predict(
    params: &ClassifierParams,
    x: ArrayView2<f64>,
    threshold: f64,
) -> Result<(Array2<f64>, Array2<u8>)> {
    let probs = logits(params, x)?.mapv(sigmoid);
    let labels = probs.mapv(|p| u8::from(p > threshold));
    Ok((probs, labels))
}

/// Gradients laid out like `ClassifierParams::values`, plus the batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
    pub loss: f64,
}

fn accumulate_dense(
    grad: &mut [f64],
    layout_w: &std::ops::Range<usize>,
    layout_b: &std::ops::Range<usize>,
    d_out: ArrayView2<f64>,
    input: ArrayView2<f64>,
) {
    let dw = d_out.t().dot(&input);
    for (g, x) in grad[layout_w.clone()].iter_mut().zip(dw.iter()) {
        *g += x;
    }
    let db = d_out.sum_axis(Axis(0));
    for (g, x) in grad[layout_b.clone()].iter_mut().zip(db.iter()) {
        *g += x;
    }
}

/// Exact gradients of the mean BCE of `cache.logits` against `targets`.
pub fn backward(
    params: &ClassifierParams,
    cache: &ForwardCache,
    targets: ArrayView2<f64>,
) -> Result<Gradients> {
    if cache.step != params.adam.step || cache.n_params != params.values.len() {
        return Err(NilmError::InvalidState(
            "forward cache was built from different parameters".into(),
        ));
    }
    loss::check_targets(cache.logits.view(), targets)?;
    let cfg = &params.config;
    let layout = ParamLayout::new(cfg);
    let v = &params.values;
    let (h, c) = (cfg.hidden_dim, cfg.n_classes);
    let mut grad = vec![0.0; v.len()];

    let loss = loss::bce_loss(cache.logits.view(), targets)?;
    let d_logits = loss::bce_grad(cache.logits.view(), targets);
    accumulate_dense(&mut grad, &layout.output_w, &layout.output_b, d_logits.view(), cache.last_hidden.view());
    let mut d_state = d_logits.dot(&matrix(v, &layout.output_w, c, h));

    for (bl, bc) in layout.blocks.iter().zip(&cache.blocks).rev() {
        // layer norm
        let gain = vector(v, &bl.ln_gain);
        let dg = (&d_state * &bc.xhat).sum_axis(Axis(0));
        let db = d_state.sum_axis(Axis(0));
        for (g, x) in grad[bl.ln_gain.clone()].iter_mut().zip(dg.iter()) {
            *g += x;
        }
        for (g, x) in grad[bl.ln_bias.clone()].iter_mut().zip(db.iter()) {
            *g += x;
        }
        let dxhat = &d_state * &gain.insert_axis(Axis(0));
        let width = h as f64;
        let mut d_sum = Array2::zeros(dxhat.dim());
        for (((mut out, dx), xh), &inv) in d_sum
            .axis_iter_mut(Axis(0))
            .zip(dxhat.axis_iter(Axis(0)))
            .zip(bc.xhat.axis_iter(Axis(0)))
            .zip(&bc.inv_std)
        {
            let mean_dx = dx.sum() / width;
            let mean_dx_xh = dx.dot(&xh) / width;
            Zip::from(&mut out)
                .and(&dx)
                .and(&xh)
                .for_each(|o, &a, &b| *o = inv * (a - mean_dx - b * mean_dx_xh));
        }

        // residual: d_state flows straight through, plus the branch
        let mut d_branch = d_sum.clone();
        if let Some(m) = &bc.mask {
            d_branch *= m;
        }
        accumulate_dense(&mut grad, &bl.w2, &bl.b2, d_branch.view(), bc.hidden.view());
        let mut d_hidden = d_branch.dot(&matrix(v, &bl.w2, h, h));
        Zip::from(&mut d_hidden)
            .and(&bc.pre_relu)
            .for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
        accumulate_dense(&mut grad, &bl.w1, &bl.b1, d_hidden.view(), bc.input.view());
        d_state = d_sum + d_hidden.dot(&matrix(v, &bl.w1, h, h));
    }
    accumulate_dense(&mut grad, &layout.input_w, &layout.input_b, d_state.view(), cache.input.view());
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(NilmError::Numeric("non-finite gradient".into()));
    }
    Ok(Gradients { values: grad, loss })
}
