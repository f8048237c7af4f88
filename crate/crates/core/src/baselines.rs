//! Reference forecasters: historical average and vector autoregression.

use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::numerics::linalg::{cholesky, cholesky_solve};
use crate::numerics::Matrix;
use crate::persist::{read_matrix_csv, write_matrix_csv, Metadata};

/// Ridge added to the normal equations when they are singular.
pub const RIDGE_FALLBACK: f64 = 1e-6;

/// Per-series mean of the N×H window, repeated over `horizon` steps.
pub fn ha_forecast(window: &Matrix, horizon: usize) -> Result<Matrix> {
    if window.cols() == 0 || window.rows() == 0 {
        return Err(Error::Argument(
            "historical average needs a non-empty window".into(),
        ));
    }
    let h = window.cols() as f64;
    let means: Vec<f64> = (0..window.rows())
        .map(|i| window.row(i).iter().sum::<f64>() / h)
        .collect();
    Ok(Matrix::from_fn(window.rows(), horizon, |i, _| means[i]))
}

/// `x_t = c + Σ_k C_k x_{t−k} + ε_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub lag: usize,
    /// `coefficients[k]` multiplies `x_{t−k−1}`.
    pub coefficients: Vec<Matrix>,
    pub intercept: Vec<f64>,
    /// Whether the ridge fallback was needed.
    pub ridge: bool,
}

impl VarModel {
    pub fn n_series(&self) -> usize {
        self.intercept.len()
    }

    /// One-step prediction from the `lag` most recent columns of `recent`
    /// (oldest first).
    fn step(&self, recent: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n_series();
        let mut out = self.intercept.clone();
        for (k, c) in self.coefficients.iter().enumerate() {
            let x = &recent[recent.len() - 1 - k];
            for (i, o) in out.iter_mut().enumerate() {
                let row = c.row(i);
                for j in 0..n {
                    *o += row[j] * x[j];
                }
            }
        }
        out
    }

    /// In-sample one-step residuals `x_t − x̂_t` for `t ≥ lag` (N×(T−lag)).
    pub fn residuals(&self, values: &Matrix) -> Matrix {
        let t = values.cols();
        let cols: Vec<Vec<f64>> = (0..t).map(|s| values.col_vec(s)).collect();
        let mut r = Matrix::zeros(values.rows(), t - self.lag);
        for s in self.lag..t {
            let pred = self.step(&cols[s - self.lag..s]);
            for i in 0..values.rows() {
                r[(i, s - self.lag)] = values[(i, s)] - pred[i];
            }
        }
        r
    }

    /// Writes `lag_<k>.csv`, `intercept.csv` and `var.meta` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, c) in self.coefficients.iter().enumerate() {
            write_matrix_csv(&dir.join(format!("lag_{}.csv", k + 1)), c)?;
        }
        write_matrix_csv(&dir.join("intercept.csv"), &Matrix::column(&self.intercept))?;
        let mut meta = Metadata::new();
        meta.set("lag", self.lag)
            .set("n_series", self.n_series())
            .set("ridge", self.ridge);
        meta.write(&dir.join("var.meta"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = Metadata::read(&dir.join("var.meta"))?;
        let lag: usize = meta.parse("lag")?;
        let coefficients = (1..=lag)
            .map(|k| read_matrix_csv(&dir.join(format!("lag_{k}.csv"))))
            .collect::<Result<Vec<_>>>()?;
        let intercept = read_matrix_csv(&dir.join("intercept.csv"))?.into_data();
        Ok(Self {
            lag,
            coefficients,
            intercept,
            ridge: meta.parse("ridge")?,
        })
    }
}

/// Least-squares VAR(p) with intercept on the N×T training block.
///
/// Solved through the normal equations with a Cholesky factorization; a
/// singular system falls back to a ridge penalty of [`RIDGE_FALLBACK`] and
/// logs a warning.
pub fn var_fit(values: &Matrix, lag: usize) -> Result<VarModel> {
    let n = values.rows();
    let t = values.cols();
    if lag == 0 {
        return Err(Error::Argument("VAR lag must be at least 1".into()));
    }
    let k = n * lag + 1;
    if t <= k || t <= lag {
        return Err(Error::InsufficientData(format!(
            "VAR({lag}) on {n} series needs more than {k} timesteps, got {t}"
        )));
    }
    let rows = t - lag;
    // Design matrix, one row per target time: [x_{t−1} … x_{t−p} 1].
    let design = Matrix::from_fn(rows, k, |r, c| {
        if c == k - 1 {
            1.0
        } else {
            let (lag_idx, j) = (c / n, c % n);
            values[(j, r + lag - 1 - lag_idx)]
        }
    });
    let target = Matrix::from_fn(rows, n, |r, j| values[(j, r + lag)]);
    let gram = design.t_matmul(&design);
    let rhs = design.t_matmul(&target);
    let (factor, ridge) = match cholesky(&gram) {
        Ok(l) => (l, false),
        Err(_) => {
            warn!("VAR({lag}) normal equations are singular; adding ridge {RIDGE_FALLBACK}");
            let mut g = gram.clone();
            for i in 0..k {
                g[(i, i)] += RIDGE_FALLBACK;
            }
            (cholesky(&g)?, true)
        }
    };
    // beta: k×n
    let beta = cholesky_solve(&factor, &rhs);
    let coefficients = (0..lag)
        .map(|l| Matrix::from_fn(n, n, |i, j| beta[(l * n + j, i)]))
        .collect();
    let intercept = (0..n).map(|i| beta[(k - 1, i)]).collect();
    Ok(VarModel {
        lag,
        coefficients,
        intercept,
        ridge,
    })
}

/// Iterated multi-step forecast from the N×H `window` (H ≥ lag).
pub fn var_forecast(model: &VarModel, window: &Matrix, horizon: usize) -> Result<Matrix> {
    if window.rows() != model.n_series() {
        return Err(Error::Dimension(format!(
            "window has {} series, model {}",
            window.rows(),
            model.n_series()
        )));
    }
    if window.cols() < model.lag {
        return Err(Error::Argument(format!(
            "window of {} steps is shorter than the lag {}",
            window.cols(),
            model.lag
        )));
    }
    let mut recent: Vec<Vec<f64>> = (window.cols() - model.lag..window.cols())
        .map(|s| window.col_vec(s))
        .collect();
    let mut out = Matrix::zeros(window.rows(), horizon);
    for f in 0..horizon {
        let next = model.step(&recent);
        for (i, v) in next.iter().enumerate() {
            out[(i, f)] = *v;
        }
        recent.remove(0);
        recent.push(next);
    }
    Ok(out)
}
