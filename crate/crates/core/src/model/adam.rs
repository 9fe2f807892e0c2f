use serde::{Deserialize, Serialize};

use super::ClassifierParams;
use crate::error::{NilmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ClassifierParams, grads: &[f64], lr: f64, hyper: AdamHyper) -> Result<()> {
    if grads.len() != params.values.len() {
        return Err(NilmError::invalid(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.values.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(NilmError::invalid(format!("learning rate {lr}")));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NilmError::Numeric(format!(
            "non-finite gradient at parameter {i} (step {})",
            params.adam.step
        )));
    }
    let state = &mut params.adam;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, m), v), &g) in params
        .values
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
        .zip(grads)
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}
