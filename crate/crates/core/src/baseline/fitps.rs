use ndarray::Array2;

use crate::error::{NilmError, Result};
use crate::signal::abscissa_crossings;

/// One row per mains period, each resampled to `n_k` points starting at a
/// rising voltage zero crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct FitPsMatrix {
    pub matrix: Array2<f64>,
}

impl FitPsMatrix {
    pub fn n_l(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_k(&self) -> usize {
        self.matrix.ncols()
    }
}

fn lerp_at(x: &[f64], pos: f64) -> f64 {
    let i = pos.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let frac = pos - i as f64;
    x[i] + frac * (x[i + 1] - x[i])
}

pub fn fitps_transform(voltage: &[f64], current: &[f64], n_k: usize) -> Result<FitPsMatrix> {
    if voltage.len() != current.len() {
        return Err(NilmError::invalid(format!(
            "voltage has {} samples, current {}",
            voltage.len(),
            current.len()
        )));
    }
    if n_k < 2 {
        return Err(NilmError::invalid(format!("n_k must be at least 2, got {n_k}")));
    }
    let crossings = abscissa_crossings(voltage);
    if crossings.len() < 2 {
        return Err(NilmError::invalid(format!(
            "FIT-PS needs two voltage zero crossings, found {}",
            crossings.len()
        )));
    }
    let rows = crossings.len() - 1;
    let mut matrix = Array2::zeros((rows, n_k));
    for (l, pair) in crossings.windows(2).enumerate() {
        let step = (pair[1] - pair[0]) / n_k as f64;
        for k in 0..n_k {
            matrix[[l, k]] = lerp_at(current, pair[0] + k as f64 * step);
        }
    }
    Ok(FitPsMatrix { matrix })
}

/// Row-major flattening to exactly `n_rows` periods: extra periods are
/// dropped, missing ones repeat the last available period.
pub fn fitps_flat(voltage: &[f64], current: &[f64], n_k: usize, n_rows: usize) -> Result<Vec<f64>> {
    let m = fitps_transform(voltage, current, n_k)?.matrix;
    let mut out = Vec::with_capacity(n_rows * n_k);
    for l in 0..n_rows {
        out.extend(m.row(l.min(m.nrows() - 1)).iter());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn periodic_rows_agree() {
        let v: Vec<f64> = (0..520).map(|j| (TAU * (j as f64 - 0.3) / 50.0).sin()).collect();
        let i: Vec<f64> = (0..520).map(|j| 2.0 * (TAU * (j as f64 - 0.3) / 50.0 + 0.4).sin()).collect();
        let m = fitps_transform(&v, &i, 50).unwrap();
        assert_eq!(m.n_l(), abscissa_crossings(&v).len() - 1);
        for l in 1..m.n_l() {
            for k in 0..50 {
                // linear interpolation error on a 50-point sine grid
                assert!((m.matrix[[l, k]] - m.matrix[[0, k]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn three_periods_shape() {
        let v: Vec<f64> = (0..=151).map(|j| (TAU * (j as f64 - 0.5) / 50.0).sin()).collect();
        let m = fitps_transform(&v, &v, 50).unwrap();
        assert_eq!(m.matrix.dim(), (3, 50));
    }

    #[test]
    fn drifting_frequency_stays_aligned() {
        // instantaneous frequency ramps by 5% over the record
        let n = 2000;
        let phase = |j: f64| TAU * (j / 50.0 + 0.05 * j * j / (2.0 * 50.0 * n as f64));
        let v: Vec<f64> = (0..n).map(|j| phase(j as f64 + 0.37).sin()).collect();
        let i: Vec<f64> = (0..n).map(|j| (phase(j as f64 + 0.37) + 0.9).sin()).collect();
        let m = fitps_transform(&v, &i, 50).unwrap();
        let col0 = m.matrix.column(0);
        let mean = col0.mean().unwrap();
        let col_var = col0.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col0.len() as f64;
        // same column of naive fixed-length frames drifts through the phase
        let frames: Vec<f64> = (0..n / 50).map(|l| i[l * 50]).collect();
        let fm = frames.iter().sum::<f64>() / frames.len() as f64;
        let frame_var = frames.iter().map(|x| (x - fm).powi(2)).sum::<f64>() / frames.len() as f64;
        assert!(col_var < 1e-3 * frame_var, "{col_var} vs {frame_var}");
        assert!((mean - 0.9f64.sin()).abs() < 1e-2);
    }

    #[test]
    fn too_few_crossings() {
        let v: Vec<f64> = (0..40).map(|j| (TAU * (j as f64 + 0.5) / 50.0).sin()).collect();
        assert!(fitps_transform(&v, &v, 50).is_err());
    }

    #[test]
    fn flat_pads_and_truncates() {
        let v: Vec<f64> = (0..=151).map(|j| (TAU * (j as f64 - 0.5) / 50.0).sin()).collect();
        let m = fitps_transform(&v, &v, 10).unwrap().matrix;
        let long = fitps_flat(&v, &v, 10, 5).unwrap();
        assert_eq!(long.len(), 50);
        assert_eq!(&long[40..], m.row(2).to_vec().as_slice());
        assert_eq!(fitps_flat(&v, &v, 10, 2).unwrap().len(), 20);
    }
}
