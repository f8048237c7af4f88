//! Proximal operators shared by the graphical-lasso solvers.

use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Matrix};

/// `sign(x) · max(|x| − κ, 0)`
pub fn soft_threshold(x: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(shrink(x, kappa))
}

/// Elementwise [`soft_threshold`].
pub fn soft_threshold_matrix(m: &Matrix, kappa: f64) -> Result<Matrix> {
    check_kappa(kappa)?;
    Ok(m.map(|x| shrink(x, kappa)))
}

/// Elementwise soft threshold that leaves the diagonal untouched.
pub fn soft_threshold_offdiag(m: &Matrix, kappa: f64) -> Result<Matrix> {
    check_kappa(kappa)?;
    let mut out = m.map(|x| shrink(x, kappa));
    for i in 0..m.rows().min(m.cols()) {
        out[(i, i)] = m[(i, i)];
    }
    Ok(out)
}

#[inline]
fn shrink(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(Error::Argument(format!(
            "soft-threshold level must be nonnegative, got {kappa}"
        )));
    }
    Ok(())
}

/// Solves `η·Θ − Θ⁻¹ = rhs` for symmetric positive-definite `Θ`.
///
/// This is the minimizer of `−log det Θ + (η/2)‖Θ − rhs/η‖²_F`; each
/// eigenvalue `d` of `rhs` maps to `(d + √(d² + 4η)) / (2η)`.
pub fn logdet_prox(rhs: &Matrix, eta: f64) -> Result<Matrix> {
    if !(eta > 0.0) {
        return Err(Error::Argument(format!(
            "prox weight must be positive, got {eta}"
        )));
    }
    let eig = sym_eig(rhs)?;
    Ok(eig
        .map_eigenvalues(|d| (d + (d * d + 4.0 * eta).sqrt()) / (2.0 * eta))
        .symmetrize())
}
