//! Static sparse precision estimation: `min −log det Θ + tr(SΘ) + λ‖Θ‖₁`.

use std::path::Path;

use crate::data::sidecar_path;
use crate::error::{Error, Result};
use crate::numerics::linalg::{cholesky, inverse_spd, log_det_spd};
use crate::numerics::{logdet_prox, soft_threshold_matrix, soft_threshold_offdiag, Matrix};
use crate::persist::{read_matrix_csv, write_matrix_csv, Metadata};

/// Magnitude below which a precision entry counts as zero.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub s: Matrix,
    pub sample_count: usize,
}

/// `S = (1/n)·X·Xᵀ` for an N×n block of (already centered) observations.
pub fn empirical_cov(x: &Matrix) -> Result<CovarianceEstimate> {
    let n = x.cols();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let s = x.matmul_t(x).scale(1.0 / n as f64).symmetrize();
    Ok(CovarianceEstimate { s, sample_count: n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub penalize_diagonal: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            abs_tol: 1e-5,
            rel_tol: 1e-4,
            max_iter: 500,
            penalize_diagonal: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho", self.rho),
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Argument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub theta: Matrix,
    pub lambda: f64,
    /// Best objective reached up to each iteration (non-increasing).
    pub objective_history: Vec<f64>,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PrecisionEstimate {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Writes Θ as CSV with a metadata sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_matrix_csv(path, &self.theta)?;
        let mut meta = Metadata::new();
        meta.set_f64("lambda", self.lambda)
            .set("iterations", self.iterations)
            .set("converged", self.converged)
            .set_f64("objective", self.objective());
        meta.write(&sidecar_path(path))
    }

    /// Reads a saved estimate; histories are not persisted and come back
    /// holding only the final objective.
    pub fn load(path: &Path) -> Result<Self> {
        let theta = read_matrix_csv(path)?;
        let meta_path = sidecar_path(path);
        let meta = Metadata::read(&meta_path)?;
        if !theta.is_square() {
            return Err(Error::format(path, "precision matrix is not square"));
        }
        Ok(Self {
            theta,
            lambda: meta.parse("lambda")?,
            objective_history: vec![meta.parse("objective")?],
            primal_residuals: Vec::new(),
            dual_residuals: Vec::new(),
            converged: meta.parse("converged")?,
            iterations: meta.parse("iterations")?,
        })
    }
}

fn check_square_symmetric(s: &Matrix) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "covariance must be square, got {:?}",
            s.shape()
        )));
    }
    if !s.is_symmetric(1e-9 * s.max_abs().max(1.0)) {
        return Err(Error::Argument("covariance is not symmetric".into()));
    }
    Ok(())
}

fn l1_penalty(theta: &Matrix, penalize_diagonal: bool) -> f64 {
    let mut total = theta.l1_norm();
    if !penalize_diagonal {
        total -= theta.diag().iter().map(|d| d.abs()).sum::<f64>();
    }
    total
}

/// `−log det Θ + tr(SΘ) + λ·Σ_ij |Θ_ij|`.
pub fn glasso_objective(theta: &Matrix, s: &Matrix, lambda: f64) -> Result<f64> {
    penalized_objective(theta, s, lambda, true)
}

pub(crate) fn penalized_objective(
    theta: &Matrix,
    s: &Matrix,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    if theta.shape() != s.shape() {
        return Err(Error::Dimension(format!(
            "theta {:?} vs covariance {:?}",
            theta.shape(),
            s.shape()
        )));
    }
    let log_det = log_det_spd(theta)?;
    let trace: f64 = theta.data().iter().zip(s.data()).map(|(a, b)| a * b).sum();
    Ok(-log_det + trace + lambda * l1_penalty(theta, penalize_diagonal))
}

/// Largest violation of the optimality conditions at `theta`.
///
/// Off the support `|(S − Θ⁻¹)_ij| ≤ λ` must hold; on the support
/// `(S − Θ⁻¹)_ij = −λ·sign(Θ_ij)`.
pub fn kkt_violation(
    theta: &Matrix,
    s: &Matrix,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    let grad = s.sub(&inverse_spd(theta)?);
    let n = theta.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let lam = if i == j && !penalize_diagonal {
                0.0
            } else {
                lambda
            };
            let g = grad[(i, j)];
            let t = theta[(i, j)];
            let v = if t.abs() <= SUPPORT_TOL {
                (g.abs() - lam).max(0.0)
            } else {
                (g + lam * t.signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

fn diagonal_start(s: &Matrix, lambda: f64) -> Matrix {
    Matrix::from_diag(
        &s.diag()
            .iter()
            .map(|d| 1.0 / (d + lambda))
            .collect::<Vec<_>>(),
    )
}

fn is_pd(m: &Matrix) -> bool {
    cholesky(m).is_ok()
}

const RHO_UPDATE_EVERY: usize = 10;
const RHO_BALANCE: f64 = 10.0;
const RHO_FACTOR: f64 = 2.0;

/// Two-block ADMM on `Θ = Z`.
///
/// Θ is updated through the closed-form log-det proximal map, Z by soft
/// thresholding at `λ/ρ`. `options.rho` is the starting penalty; it is
/// doubled or halved every few iterations when one residual dominates the
/// other by more than a factor of ten. The returned matrix is the sparse copy Z when it
/// is positive definite (so zeros are exact), otherwise the dense Θ. When
/// `max_iter` runs out the best iterate seen is returned with
/// `converged = false`.
pub fn solve_static(s: &Matrix, lambda: f64, options: &SolverOptions) -> Result<PrecisionEstimate> {
    check_square_symmetric(s)?;
    options.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let s = s.symmetrize();
    let n = s.rows();
    let mut rho = options.rho;
    let shrink = |m: &Matrix, kappa: f64| -> Result<Matrix> {
        if options.penalize_diagonal {
            soft_threshold_matrix(m, kappa)
        } else {
            soft_threshold_offdiag(m, kappa)
        }
    };
    let objective = |m: &Matrix| penalized_objective(m, &s, lambda, options.penalize_diagonal);

    let mut z = diagonal_start(&s, lambda);
    let mut u = Matrix::zeros(n, n);
    let mut theta = z.clone();
    let mut best = z.clone();
    let mut best_obj = objective(&z)?;

    let mut objective_history = Vec::new();
    let mut primal_residuals = Vec::new();
    let mut dual_residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let scale_n = n as f64;

    for _ in 0..options.max_iter {
        iterations += 1;
        let rhs = z.sub(&u).scale(rho).sub(&s);
        theta = logdet_prox(&rhs, rho)?;
        let z_prev = z;
        z = shrink(&theta.add(&u), lambda / rho)?;
        u.add_assign(&theta.sub(&z));

        let r = theta.sub(&z).frobenius_norm();
        let d = rho * z.sub(&z_prev).frobenius_norm();
        primal_residuals.push(r);
        dual_residuals.push(d);

        let candidate = if is_pd(&z) { &z } else { &theta };
        if let Ok(obj) = objective(candidate) {
            if obj < best_obj {
                best_obj = obj;
                best = candidate.clone();
            }
        }
        objective_history.push(best_obj);

        let eps_pri = scale_n * options.abs_tol
            + options.rel_tol * theta.frobenius_norm().max(z.frobenius_norm());
        let eps_dual = scale_n * options.abs_tol + options.rel_tol * rho * u.frobenius_norm();
        if !r.is_finite() || !d.is_finite() {
            return Err(Error::Numeric("ADMM residuals became non-finite".into()));
        }
        if r <= eps_pri && d <= eps_dual {
            converged = true;
            break;
        }
        // residual balancing; u is the scaled dual so it moves inversely
        if iterations % RHO_UPDATE_EVERY == 0 {
            if r > RHO_BALANCE * d {
                rho *= RHO_FACTOR;
                u = u.scale(1.0 / RHO_FACTOR);
            } else if d > RHO_BALANCE * r {
                rho /= RHO_FACTOR;
                u = u.scale(RHO_FACTOR);
            }
        }
    }

    let theta_out = if converged {
        let final_iterate = if is_pd(&z) { z } else { theta };
        if let Some(last) = objective_history.last_mut() {
            *last = objective(&final_iterate)?.min(*last);
        }
        final_iterate
    } else {
        best
    };
    Ok(PrecisionEstimate {
        theta: theta_out,
        lambda,
        objective_history,
        primal_residuals,
        dual_residuals,
        converged,
        iterations,
    })
}

/// Precision, recall and F1 of the off-diagonal support of `estimate`
/// against `truth` (entries with magnitude above `tol` count as edges).
pub fn support_scores(estimate: &Matrix, truth: &Matrix, tol: f64) -> (f64, f64, f64) {
    let n = truth.rows();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let e = estimate[(i, j)].abs() > tol;
            let t = truth[(i, j)].abs() > tol;
            match (e, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        apply_transform, generate_synthetic, GroundTruth, SeriesFrame, SyntheticKind,
        SyntheticSpec, TransformKind,
    };
    use crate::numerics::SeededRng;

    fn random_pd(n: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        let a = Matrix::from_fn(n, 2 * n, |_, _| rng.standard_normal());
        a.matmul_t(&a)
            .scale(1.0 / (2 * n) as f64)
            .add(&Matrix::identity(n).scale(0.1))
    }

    #[test]
    fn covariance_of_identity_columns() {
        let c = empirical_cov(&Matrix::identity(2)).unwrap();
        assert_eq!(c.s, Matrix::identity(2).scale(0.5));
        assert_eq!(c.sample_count, 2);
    }

    #[test]
    fn covariance_of_zscored_frame_has_unit_diagonal() {
        let mut rng = SeededRng::new(1);
        let m = Matrix::from_fn(4, 1000, |_, _| 3.0 + 2.0 * rng.standard_normal());
        let names = (0..4).map(|i| format!("x{i}")).collect();
        let f = SeriesFrame::new(m, names).unwrap();
        let z = apply_transform(&f, TransformKind::ZScore, 0..1000).unwrap();
        let c = empirical_cov(&z.values).unwrap();
        for d in c.s.diag() {
            assert!((d - 1.0).abs() < 0.01, "{d}");
        }
    }

    #[test]
    fn duplicated_series_give_rank_deficient_cov() {
        let m = Matrix::from_rows(&[[1.0, -1.0, 2.0, -2.0], [1.0, -1.0, 2.0, -2.0]]);
        let c = empirical_cov(&m).unwrap();
        assert_eq!(c.s[(0, 1)], c.s[(0, 0)]);
        assert!(matches!(
            empirical_cov(&Matrix::zeros(3, 1)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn objective_examples() {
        let i2 = Matrix::identity(2);
        assert!((glasso_objective(&i2, &i2, 0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((glasso_objective(&i2, &i2, 0.5).unwrap() - 3.0).abs() < 1e-12);
        let t = i2.scale(2.0);
        let expect = -2.0 * 2f64.ln() + 4.0;
        assert!((glasso_objective(&t, &i2, 0.0).unwrap() - expect).abs() < 1e-12);
        let bad = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            glasso_objective(&bad, &i2, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn diagonal_covariance_decouples() {
        let est = solve_static(&Matrix::identity(4), 0.1, &SolverOptions::default()).unwrap();
        assert!(est.converged);
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert!((est.theta[(i, i)] - 1.0 / 1.1).abs() < 1e-4);
                } else {
                    assert_eq!(est.theta[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn unpenalized_solution_is_inverse() {
        let s = random_pd(5, 2);
        let opts = SolverOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_iter: 5000,
            ..SolverOptions::default()
        };
        let est = solve_static(&s, 0.0, &opts).unwrap();
        let inv = inverse_spd(&s).unwrap();
        assert!(est.theta.sub(&inv).frobenius_norm() < 1e-5);
    }

    #[test]
    fn large_lambda_empties_the_graph() {
        let s = random_pd(6, 5);
        let mut max_off = 0.0f64;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    max_off = max_off.max(s[(i, j)].abs());
                }
            }
        }
        let est = solve_static(&s, max_off, &SolverOptions::default()).unwrap();
        assert_eq!(est.theta.offdiag_nonzeros(0.0), 0);
    }

    #[test]
    fn kkt_holds_at_solution() {
        let s = random_pd(6, 11);
        let opts = SolverOptions {
            abs_tol: 1e-7,
            rel_tol: 1e-7,
            max_iter: 5000,
            ..SolverOptions::default()
        };
        for lambda in [0.05, 0.1, 0.3] {
            let est = solve_static(&s, lambda, &opts).unwrap();
            assert!(est.converged);
            let v = kkt_violation(&est.theta, &s, lambda, true).unwrap();
            assert!(v <= 1e-4, "lambda {lambda}: {v}");
        }
    }

    #[test]
    fn unpenalized_diagonal_option() {
        let opts = SolverOptions {
            penalize_diagonal: false,
            ..SolverOptions::default()
        };
        let est = solve_static(&Matrix::identity(3), 0.1, &opts).unwrap();
        for i in 0..3 {
            assert!((est.theta[(i, i)] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn objective_history_is_non_increasing() {
        let s = random_pd(8, 3);
        let est = solve_static(&s, 0.1, &SolverOptions::default()).unwrap();
        for w in est.objective_history.windows(2).skip(5) {
            assert!(w[1] <= w[0] + 1e-8);
        }
    }

    #[test]
    fn rank_deficient_input_still_gives_pd_output() {
        let m = Matrix::from_rows(&[
            [1.0, -1.0, 2.0, -2.0],
            [1.0, -1.0, 2.0, -2.0],
            [0.5, 0.3, -0.2, 0.1],
        ]);
        let s = empirical_cov(&m).unwrap().s;
        for lambda in [0.0, 0.1] {
            let est = solve_static(&s, lambda, &SolverOptions::default()).unwrap();
            assert!(is_pd(&est.theta));
            assert!(est.theta.is_symmetric(1e-12));
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(matches!(
            solve_static(&Matrix::identity(2), -0.1, &SolverOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn recovers_support_of_synthetic_ggm() {
        let spec = SyntheticSpec::new(SyntheticKind::Ggm, 20, 2000, 0.15, 0);
        let data = generate_synthetic(&spec).unwrap();
        let z = apply_transform(&data.frame, TransformKind::ZScore, 0..2000).unwrap();
        let s = empirical_cov(&z.values).unwrap().s;
        let est = solve_static(&s, 0.1, &SolverOptions::default()).unwrap();
        let GroundTruth::Precision(truth) = data.truth else {
            unreachable!()
        };
        let (_, _, f1) = support_scores(&est.theta, &truth, SUPPORT_TOL);
        assert!(f1 >= 0.8, "F1 {f1}");
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        let est = solve_static(&random_pd(4, 9), 0.1, &SolverOptions::default()).unwrap();
        est.save(&path).unwrap();
        let back = PrecisionEstimate::load(&path).unwrap();
        assert_eq!(back.theta, est.theta);
        assert_eq!(back.iterations, est.iterations);
        assert_eq!(back.objective(), est.objective());
    }
}
