//! Principal component analysis by eigendecomposition of the sample
//! covariance.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg::{self, nested};
use crate::error::{NilmError, Result};

/// Subtracts column means. Returns the centred matrix and the means.
pub fn mean_center(x: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    if x.nrows() < 2 {
        return Err(NilmError::invalid(format!(
            "mean centring needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    let mu = linalg::column_means(x);
    let centred = &x - &mu.view().insert_axis(Axis(0));
    Ok((centred, mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Column means of the training data.
    pub mean: Vec<f64>,
    /// n × k, columns are unit eigenvectors.
    #[serde(with = "nested")]
    pub basis: Array2<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance (sum of all eigenvalues).
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        } else {
            1.0
        }
    }
}

/// Full descending spectrum of the covariance of centred `x`.
pub fn pca_spectrum(x_centered: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    if x_centered.nrows() < 2 {
        return Err(NilmError::invalid("PCA needs at least 2 rows"));
    }
    let cov = linalg::covariance(x_centered);
    let (mut values, mut vectors) = linalg::sym_eigen_desc(cov.view())?;
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    linalg::fix_column_signs(&mut vectors);
    Ok((values, vectors))
}

/// Smallest component count whose eigenvalues explain `fraction` of the
/// variance, clamped to `1..=cap`.
pub fn components_for_variance(eigenvalues: &[f64], fraction: f64, cap: usize) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    let cap = cap.min(eigenvalues.len()).max(1);
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v;
        if acc / total >= fraction {
            return (i + 1).min(cap);
        }
    }
    cap
}

fn check_rank(k: usize, m: usize, n: usize, what: &str) -> Result<()> {
    let max = (m.saturating_sub(1)).min(n);
    if k < 1 || k > max {
        return Err(NilmError::invalid(format!(
            "{what}={k} must lie in 1..={max} for a {m}x{n} matrix"
        )));
    }
    Ok(())
}

pub(crate) fn model_from_spectrum(
    values: &[f64],
    vectors: &Array2<f64>,
    k: usize,
    mean: Vec<f64>,
) -> PcaModel {
    PcaModel {
        mean,
        basis: vectors.slice(ndarray::s![.., ..k]).to_owned(),
        eigenvalues: values[..k].to_vec(),
        total_variance: values.iter().sum(),
    }
}

/// Fits `k_pca` components to already-centred data. The stored mean is zero.
pub fn pca_fit(x_centered: ArrayView2<f64>, k_pca: usize) -> Result<PcaModel> {
    let (m, n) = x_centered.dim();
    check_rank(k_pca, m, n, "k_pca")?;
    let (values, vectors) = pca_spectrum(x_centered)?;
    Ok(model_from_spectrum(&values, &vectors, k_pca, vec![0.0; n]))
}

/// Projects centred rows onto the retained basis.
pub fn pca_transform(model: &PcaModel, x_centered: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_centered.ncols() != model.n_features() {
        return Err(NilmError::invalid(format!(
            "PCA model expects {} columns, got {}",
            model.n_features(),
            x_centered.ncols()
        )));
    }
    Ok(x_centered.dot(&model.basis))
}

pub(crate) fn check_ica_rank(k: usize, m: usize, n: usize) -> Result<()> {
    check_rank(k, m, n, "k_ica")
}
