//! Dense helpers on top of ndarray, with nalgebra supplying the symmetric
//! eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{NilmError, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Columns of the
/// returned matrix are the eigenvectors.
pub fn sym_eigen_desc(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(NilmError::invalid("eigendecomposition of a non-square matrix"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = SymmetricEigen::try_new(m, 1e-15, 10_000 * n.max(1)).ok_or_else(|| {
        NilmError::Numeric(format!("symmetric eigensolver did not converge on a {n}x{n} matrix"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn fix_column_signs(v: &mut Array2<f64>) {
    for mut col in v.axis_iter_mut(Axis(1)) {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Sample covariance `XᵀX / (m-1)` of already-centred rows.
pub fn covariance(x: ArrayView2<f64>) -> Array2<f64> {
    let m = x.nrows() as f64;
    x.t().dot(&x) / (m - 1.0)
}

pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}

/// Column variances with denominator `m - ddof`.
pub fn column_variances(x: ArrayView2<f64>, ddof: f64) -> Array1<f64> {
    x.var_axis(Axis(0), ddof)
}

pub fn to_nested(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_nested<T: Copy>(rows: &[Vec<T>], ncols_if_empty: usize) -> Result<Array2<T>> {
    let ncols = rows.first().map(Vec::len).unwrap_or(ncols_if_empty);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(NilmError::Data("ragged matrix".into()));
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| NilmError::Data(e.to_string()))
}

/// serde adapter writing a matrix as nested row arrays.
pub mod nested {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        shape: [usize; 2],
        rows: Vec<Vec<f64>>,
    }

    pub fn serialize<S: Serializer>(a: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            shape: [a.nrows(), a.ncols()],
            rows: super::to_nested(a),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        let a = super::from_nested(&r.rows, r.shape[1]).map_err(serde::de::Error::custom)?;
        if a.dim() != (r.shape[0], r.shape[1]) {
            return Err(serde::de::Error::custom("matrix shape disagrees with its rows"));
        }
        Ok(a)
    }
}
