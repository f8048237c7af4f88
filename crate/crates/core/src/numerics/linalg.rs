//! Cholesky-based helpers for symmetric positive-definite systems.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Lower-triangular `L` with `M = L·Lᵀ`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·X = B` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    assert_eq!(b.rows(), n, "cholesky_solve shape mismatch");
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

pub fn inverse_spd(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    Ok(cholesky_solve(&l, &Matrix::identity(m.rows())).symmetrize())
}

/// `log det M` for positive-definite `M`.
pub fn log_det_spd(m: &Matrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>())
}
