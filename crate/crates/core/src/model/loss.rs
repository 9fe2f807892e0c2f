use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{NilmError, Result};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` in the overflow-free form
/// `max(z,0) - z y + ln(1 + e^{-|z|})`.
#[inline]
pub fn bce_element(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub(crate) fn check_targets(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<()> {
    if logits.dim() != targets.dim() {
        return Err(NilmError::invalid(format!(
            "logits {:?} and targets {:?} differ in shape",
            logits.dim(),
            targets.dim()
        )));
    }
    if let Some(bad) = targets.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(NilmError::invalid(format!("target {bad} is not binary")));
    }
    Ok(())
}

/// Mean binary cross-entropy over every (sample, class) pair.
pub fn bce_loss(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    check_targets(logits, targets)?;
    if logits.is_empty() {
        return Err(NilmError::invalid("loss of an empty batch"));
    }
    let mut total = 0.0;
    Zip::from(&logits).and(&targets).for_each(|&z, &y| total += bce_element(z, y));
    Ok(total / logits.len() as f64)
}

/// d(mean BCE)/d logits.
pub fn bce_grad(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Array2<f64> {
    let scale = 1.0 / logits.len() as f64;
    Zip::from(&logits)
        .and(&targets)
        .map_collect(|&z, &y| (sigmoid(z) - y) * scale)
}
