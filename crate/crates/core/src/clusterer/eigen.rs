//! Symmetric eigendecomposition, backed by nalgebra.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-9;

fn to_dmatrix(a: &Array2<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!("{}x{} matrix is not square", n, a.ncols())));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| a[[i, j]]))
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as columns.
pub fn eigensolve_symmetric(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let m = to_dmatrix(a)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Ascending eigenvalues only.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let m = to_dmatrix(a)?;
    let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}
