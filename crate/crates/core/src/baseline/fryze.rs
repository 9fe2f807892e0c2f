use crate::error::{NilmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FryzeComponents {
    pub active: Vec<f64>,
    pub non_active: Vec<f64>,
    pub active_power: f64,
    pub v_rms: f64,
}

/// Splits `current` into the component proportional to `voltage` carrying
/// all the active power and an orthogonal remainder. Both series should
/// cover a whole number of mains periods.
pub fn fryze_decompose(voltage: &[f64], current: &[f64]) -> Result<FryzeComponents> {
    if voltage.len() != current.len() {
        return Err(NilmError::invalid(format!(
            "voltage has {} samples, current {}",
            voltage.len(),
            current.len()
        )));
    }
    if voltage.is_empty() {
        return Err(NilmError::invalid("empty series"));
    }
    let n = voltage.len() as f64;
    let active_power = voltage.iter().zip(current).map(|(v, i)| v * i).sum::<f64>() / n;
    let v_sq = voltage.iter().map(|v| v * v).sum::<f64>() / n;
    if v_sq == 0.0 {
        return Err(NilmError::invalid("voltage RMS is zero"));
    }
    let g = active_power / v_sq;
    let active: Vec<f64> = voltage.iter().map(|v| g * v).collect();
    let non_active = current.iter().zip(&active).map(|(i, a)| i - a).collect();
    Ok(FryzeComponents {
        active,
        non_active,
        active_power,
        v_rms: v_sq.sqrt(),
    })
}
