//! FastICA with symmetric decorrelation on PCA-whitened data.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{self, nested};
use super::pca;
use crate::error::{NilmError, Result};
use crate::rng;

/// Eigenvalues below this are clamped before inversion during whitening.
pub const WHITENING_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    /// g(y) = tanh(y)
    #[default]
    Logcosh,
    /// g(y) = y³
    Cubic,
}

impl Nonlinearity {
    #[inline]
    fn eval(self, y: f64) -> (f64, f64) {
        match self {
            Nonlinearity::Logcosh => {
                let t = y.tanh();
                (t, 1.0 - t * t)
            }
            Nonlinearity::Cubic => (y * y * y, 3.0 * y * y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaParams {
    pub n_components: usize,
    pub nonlinearity: Nonlinearity,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl IcaParams {
    pub fn new(n_components: usize, seed: u64) -> Self {
        Self {
            n_components,
            nonlinearity: Nonlinearity::Logcosh,
            max_iter: 400,
            tol: 1e-5,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    /// k × n: maps a centred row `x` to whitened coordinates `K x`.
    #[serde(with = "nested")]
    pub whitening: Array2<f64>,
    /// k × k in whitened space; columns are unit-norm unmixing vectors.
    #[serde(with = "nested")]
    pub unmixing: Array2<f64>,
    pub n_components: usize,
    pub iterations: usize,
}

impl IcaModel {
    /// n × k matrix taking centred rows straight to source estimates.
    pub fn projection(&self) -> Array2<f64> {
        self.whitening.t().dot(&self.unmixing)
    }
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &Array2<f64>) -> Result<Array2<f64>> {
    let (values, vectors) = linalg::sym_eigen_desc(w.dot(&w.t()).view())?;
    let inv_sqrt = Array1::from_iter(values.iter().map(|&v| 1.0 / v.max(1e-14).sqrt()));
    let scaled = &vectors * &inv_sqrt.view().insert_axis(Axis(0));
    Ok(scaled.dot(&vectors.t()).dot(w))
}

/// Fits FastICA to centred data.
///
/// Converges when every unmixing vector satisfies
/// `|<w_new, w_old>| > 1 - tol`; otherwise returns a numeric error carrying
/// the iteration count and the last convergence gap.
pub fn ica_fit(x_centered: ArrayView2<f64>, params: &IcaParams) -> Result<IcaModel> {
    let (m, n) = x_centered.dim();
    let k = params.n_components;
    pca::check_ica_rank(k, m, n)?;
    if !(params.tol > 0.0) {
        return Err(NilmError::invalid("ICA tolerance must be positive"));
    }
    if params.max_iter == 0 {
        return Err(NilmError::invalid("ICA max_iter must be positive"));
    }

    let (values, vectors) = pca::pca_spectrum(x_centered)?;
    let mut whitening = vectors.slice(ndarray::s![.., ..k]).t().to_owned();
    for (mut row, &lambda) in whitening.axis_iter_mut(Axis(0)).zip(&values) {
        let s = 1.0 / lambda.max(WHITENING_FLOOR).sqrt();
        row.mapv_inplace(|v| v * s);
    }
    let z = x_centered.dot(&whitening.t()); // m × k

    let mut rng = rng::derived(params.seed, &[0x1ca]);
    let init = Array2::from_shape_simple_fn((k, k), || StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init)?;

    let inv_m = 1.0 / m as f64;
    let mut gap = f64::INFINITY;
    for iter in 1..=params.max_iter {
        let y = z.dot(&w.t()); // m × k
        let mut g = Array2::zeros((m, k));
        let mut g_prime_mean = vec![0.0; k];
        for ((t, i), &v) in y.indexed_iter() {
            let (gv, dg) = params.nonlinearity.eval(v);
            g[[t, i]] = gv;
            g_prime_mean[i] += dg;
        }
        let mut w_new = g.t().dot(&z) * inv_m;
        for (i, mut row) in w_new.axis_iter_mut(Axis(0)).enumerate() {
            let c = g_prime_mean[i] * inv_m;
            row.zip_mut_with(&w.row(i), |a, &b| *a -= c * b);
        }
        let w_new = symmetric_decorrelation(&w_new)?;
        if w_new.iter().any(|v| !v.is_finite()) {
            return Err(NilmError::Numeric(format!(
                "FastICA produced non-finite weights at iteration {iter}"
            )));
        }
        gap = w_new
            .rows()
            .into_iter()
            .zip(w.rows())
            .map(|(a, b)| (1.0 - a.dot(&b).abs()).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if gap < params.tol {
            let mut unmixing = w.t().to_owned();
            for mut col in unmixing.axis_iter_mut(Axis(1)) {
                let norm = col.dot(&col).sqrt();
                col.mapv_inplace(|v| v / norm);
            }
            return Ok(IcaModel {
                whitening,
                unmixing,
                n_components: k,
                iterations: iter,
            });
        }
    }
    Err(NilmError::Numeric(format!(
        "FastICA did not converge: {} iterations, last gap {gap:.3e} >= tol {:.1e} ({k} components)",
        params.max_iter, params.tol
    )))
}

/// Source estimates `whiten(X) U` for centred rows.
pub fn ica_transform(model: &IcaModel, x_centered: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_centered.ncols() != model.whitening.ncols() {
        return Err(NilmError::invalid(format!(
            "ICA model expects {} columns, got {}",
            model.whitening.ncols(),
            x_centered.ncols()
        )));
    }
    Ok(x_centered.dot(&model.whitening.t()).dot(&model.unmixing))
}

/// Excess kurtosis with population moments.
pub fn kurtosis(series: &[f64]) -> Result<f64> {
    if series.len() < 4 {
        return Err(NilmError::invalid(format!(
            "kurtosis needs at least 4 values, got {}",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in series {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= f64::EPSILON * f64::EPSILON * mean * mean || m2 == 0.0 {
        return Err(NilmError::invalid("kurtosis of a zero-variance series"));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Result of ranking ICA components.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedComponents {
    /// The `r` selected columns, most negative kurtosis first.
    pub selected: Array2<f64>,
    /// Full permutation of component indices by ascending kurtosis.
    pub order: Vec<usize>,
    /// Kurtosis of each component in `order`.
    pub kurtosis: Vec<f64>,
}

/// Orders components by ascending kurtosis (ties by index) and keeps `r`.
pub fn rank_select_ica(z_hat: ArrayView2<f64>, r: usize) -> Result<RankedComponents> {
    let k = z_hat.ncols();
    if r < 1 || r > k {
        return Err(NilmError::invalid(format!("r={r} must lie in 1..={k}")));
    }
    let kurt = z_hat
        .columns()
        .into_iter()
        .map(|c| kurtosis(&c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        kurt[a]
            .partial_cmp(&kurt[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let selected = z_hat.select(Axis(1), &order[..r]);
    Ok(RankedComponents {
        selected,
        kurtosis: order.iter().map(|&i| kurt[i]).collect(),
        order,
    })
}
