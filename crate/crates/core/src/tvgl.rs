//! Time-varying sparse precision estimation over consecutive intervals,
//! with a squared-Frobenius penalty on changes between neighbours.

use std::path::Path;

use crate::error::{Error, Result};
use crate::glasso::{penalized_objective, CovarianceEstimate, SolverOptions};
use crate::numerics::linalg::cholesky;
use crate::numerics::{logdet_prox, soft_threshold_matrix, soft_threshold_offdiag, Matrix};
use crate::persist::{read_matrix_csv, write_matrix_csv, Metadata};

pub const DEFAULT_INTERVALS: usize = 10;

/// How a training range is cut into intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segmentation {
    Count(usize),
    Length(usize),
}

#[derive(Debug, Clone)]
pub struct IntervalCovariances {
    pub covariances: Vec<CovarianceEstimate>,
    /// Half-open `(start, end)` timestep ranges.
    pub bounds: Vec<(usize, usize)>,
}

impl IntervalCovariances {
    pub fn len(&self) -> usize {
        self.covariances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariances.first().map_or(0, |c| c.s.rows())
    }
}

/// Equal-length contiguous intervals over the columns of `x`; the last one
/// absorbs the remainder.
pub fn interval_bounds(t: usize, seg: Segmentation) -> Result<Vec<(usize, usize)>> {
    let count = match seg {
        Segmentation::Count(k) => k,
        Segmentation::Length(len) => {
            if len == 0 {
                return Err(Error::Segmentation(
                    "interval length must be positive".into(),
                ));
            }
            t / len
        }
    };
    if count == 0 {
        return Err(Error::Segmentation(format!(
            "cannot cut {t} timesteps into {seg:?}"
        )));
    }
    let len = t / count;
    Ok((0..count)
        .map(|k| {
            let end = if k + 1 == count { t } else { (k + 1) * len };
            (k * len, end)
        })
        .collect())
}

/// Per-interval empirical covariances of the (z-scored) N×T block `x`.
///
/// Every interval must hold at least `min_samples` timesteps (2 unless a
/// caller deliberately allows single-observation intervals).
pub fn segment_covariances(
    x: &Matrix,
    seg: Segmentation,
    min_samples: usize,
) -> Result<IntervalCovariances> {
    let bounds = interval_bounds(x.cols(), seg)?;
    let min_samples = min_samples.max(1);
    let mut covariances = Vec::with_capacity(bounds.len());
    for &(start, end) in &bounds {
        if end - start < min_samples {
            return Err(Error::Segmentation(format!(
                "interval {start}..{end} has {} timesteps, need at least {min_samples}",
                end - start
            )));
        }
        let block = x.col_slice(start, end);
        let n = block.cols();
        let s = block.matmul_t(&block).scale(1.0 / n as f64).symmetrize();
        covariances.push(CovarianceEstimate { s, sample_count: n });
    }
    Ok(IntervalCovariances {
        covariances,
        bounds,
    })
}

#[derive(Debug, Clone)]
pub struct PrecisionPath {
    pub thetas: Vec<Matrix>,
    pub bounds: Vec<(usize, usize)>,
    pub lambda: f64,
    pub beta: f64,
    /// Best objective reached up to each iteration (non-increasing).
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PrecisionPath {
    /// `Σ_j ‖Θ_j − Θ_{j−1}‖_F`.
    pub fn total_variation(&self) -> f64 {
        total_variation(&self.thetas)
    }

    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Writes `theta_<k>.csv` per interval plus `path.meta`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut meta = Metadata::new();
        meta.set("intervals", self.thetas.len())
            .set_f64("lambda", self.lambda)
            .set_f64("beta", self.beta)
            .set("iterations", self.iterations)
            .set("converged", self.converged)
            .set_f64("objective", self.objective())
            .set_f64("total_variation", self.total_variation());
        for (k, (theta, (start, end))) in self.thetas.iter().zip(&self.bounds).enumerate() {
            write_matrix_csv(&dir.join(format!("theta_{k:03}.csv")), theta)?;
            meta.set(format!("interval.{k}"), format!("{start}..{end}"));
        }
        meta.write(&dir.join("path.meta"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("path.meta");
        let meta = Metadata::read(&meta_path)?;
        let count: usize = meta.parse("intervals")?;
        let mut thetas = Vec::with_capacity(count);
        let mut bounds = Vec::with_capacity(count);
        for k in 0..count {
            thetas.push(read_matrix_csv(&dir.join(format!("theta_{k:03}.csv")))?);
            bounds.push(
                parse_range(meta.require(&format!("interval.{k}"))?)
                    .ok_or_else(|| Error::format(&meta_path, format!("bad interval.{k}")))?,
            );
        }
        Ok(Self {
            thetas,
            bounds,
            lambda: meta.parse("lambda")?,
            beta: meta.parse("beta")?,
            objective_history: vec![meta.parse("objective")?],
            converged: meta.parse("converged")?,
            iterations: meta.parse("iterations")?,
        })
    }
}

pub(crate) fn parse_range(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once("..")?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

pub fn total_variation(thetas: &[Matrix]) -> f64 {
    thetas
        .windows(2)
        .map(|w| w[1].sub(&w[0]).frobenius_norm())
        .sum()
}

/// `Σ_i (−log det Θ_i + tr(S_iΘ_i) + λ‖Θ_i‖₁) + β Σ_j ‖Θ_j − Θ_{j−1}‖²_F`.
pub fn tvgl_objective(
    thetas: &[Matrix],
    covs: &IntervalCovariances,
    lambda: f64,
    beta: f64,
) -> Result<f64> {
    path_objective(thetas, covs, lambda, beta, true)
}

fn path_objective(
    thetas: &[Matrix],
    covs: &IntervalCovariances,
    lambda: f64,
    beta: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    if thetas.len() != covs.len() {
        return Err(Error::Argument(format!(
            "{} precision matrices for {} intervals",
            thetas.len(),
            covs.len()
        )));
    }
    let mut total = 0.0;
    for (theta, cov) in thetas.iter().zip(&covs.covariances) {
        total += penalized_objective(theta, &cov.s, lambda, penalize_diagonal)?;
    }
    for w in thetas.windows(2) {
        let d = w[1].sub(&w[0]);
        total += beta * d.data().iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total)
}

fn sum_sq(ms: &[Matrix]) -> f64 {
    ms.iter()
        .map(|m| m.data().iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// ADMM with a consensus copy per interval for the L1 term and a pair of
/// copies per neighbouring interval pair for the coupling term.
///
/// Every subproblem is closed form. For a pair with targets `A`, `B` the
/// coupling prox keeps the midpoint and shrinks the difference:
/// `B − A ↦ ρ(B − A)/(4β + ρ)`.
pub fn solve_tvgl(
    covs: &IntervalCovariances,
    lambda: f64,
    beta: f64,
    options: &SolverOptions,
) -> Result<PrecisionPath> {
    options.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Argument(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    let k = covs.len();
    if k == 0 {
        return Err(Error::Argument("no intervals to solve".into()));
    }
    let n = covs.dim();
    for c in &covs.covariances {
        if c.s.shape() != (n, n) {
            return Err(Error::Dimension(
                "interval covariances differ in size".into(),
            ));
        }
    }
    let rho = options.rho;
    let kappa = lambda / rho;
    let shrink = |m: &Matrix| -> Result<Matrix> {
        if options.penalize_diagonal {
            soft_threshold_matrix(m, kappa)
        } else {
            soft_threshold_offdiag(m, kappa)
        }
    };
    let objective =
        |ts: &[Matrix]| path_objective(ts, covs, lambda, beta, options.penalize_diagonal);

    let start: Vec<Matrix> = covs
        .covariances
        .iter()
        .map(|c| {
            Matrix::from_diag(
                &c.s.diag()
                    .iter()
                    .map(|d| 1.0 / (d + lambda))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let mut theta = start.clone();
    let mut z0 = start.clone();
    let mut u0 = vec![Matrix::zeros(n, n); k];
    let mut z1: Vec<Matrix> = start[..k - 1].to_vec();
    let mut z2: Vec<Matrix> = start[1..].to_vec();
    let mut u1 = vec![Matrix::zeros(n, n); k - 1];
    let mut u2 = vec![Matrix::zeros(n, n); k - 1];

    let mut best = start.clone();
    let mut best_obj = objective(&start)?;
    let mut objective_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let n_copies = (k + 2 * (k - 1)) as f64;
    let sqrt_p = (n_copies * (n * n) as f64).sqrt();

    for _ in 0..options.max_iter {
        iterations += 1;
        // Θ_i: combine every copy that constrains interval i.
        for i in 0..k {
            let mut acc = z0[i].sub(&u0[i]);
            let mut copies = 1.0;
            if i + 1 < k {
                acc.add_assign(&z1[i].sub(&u1[i]));
                copies += 1.0;
            }
            if i > 0 {
                acc.add_assign(&z2[i - 1].sub(&u2[i - 1]));
                copies += 1.0;
            }
            let rhs = acc.scale(rho).sub(&covs.covariances[i].s);
            theta[i] = logdet_prox(&rhs, copies * rho)?;
        }

        let prev: Vec<Matrix> = z0.iter().chain(&z1).chain(&z2).cloned().collect();
        for i in 0..k {
            z0[i] = shrink(&theta[i].add(&u0[i]))?;
        }
        let shrink_diff = rho / (4.0 * beta + rho);
        for j in 0..k - 1 {
            let a = theta[j].add(&u1[j]);
            let b = theta[j + 1].add(&u2[j]);
            let mid = a.add(&b).scale(0.5);
            let half_delta = b.sub(&a).scale(0.5 * shrink_diff);
            z1[j] = mid.sub(&half_delta);
            z2[j] = mid.add(&half_delta);
        }

        let mut r2 = 0.0;
        for i in 0..k {
            let d = theta[i].sub(&z0[i]);
            r2 += sum_sq(std::slice::from_ref(&d));
            u0[i].add_assign(&d);
        }
        for j in 0..k - 1 {
            let d1 = theta[j].sub(&z1[j]);
            let d2 = theta[j + 1].sub(&z2[j]);
            r2 += sum_sq(&[d1.clone(), d2.clone()]);
            u1[j].add_assign(&d1);
            u2[j].add_assign(&d2);
        }
        let cur: Vec<Matrix> = z0.iter().chain(&z1).chain(&z2).cloned().collect();
        let s2: f64 = cur
            .iter()
            .zip(&prev)
            .map(|(a, b)| sum_sq(std::slice::from_ref(&a.sub(b))))
            .sum();
        let r = r2.sqrt();
        let s = rho * s2.sqrt();
        if !r.is_finite() || !s.is_finite() {
            return Err(Error::Numeric("ADMM residuals became non-finite".into()));
        }

        let candidate = output_path(&theta, &z0);
        if let Ok(obj) = objective(&candidate) {
            if obj < best_obj {
                best_obj = obj;
                best = candidate;
            }
        }
        objective_history.push(best_obj);

        let theta_norm = (sum_sq(&theta) * n_copies / k as f64).sqrt();
        let z_norm = sum_sq(&cur).sqrt();
        let u_norm = (sum_sq(&u0) + sum_sq(&u1) + sum_sq(&u2)).sqrt();
        let eps_pri = sqrt_p * options.abs_tol + options.rel_tol * theta_norm.max(z_norm);
        let eps_dual = sqrt_p * options.abs_tol + options.rel_tol * rho * u_norm;
        if r <= eps_pri && s <= eps_dual {
            converged = true;
            break;
        }
    }

    let thetas = if converged {
        let out = output_path(&theta, &z0);
        if let Some(last) = objective_history.last_mut() {
            *last = objective(&out)?.min(*last);
        }
        out
    } else {
        best
    };
    Ok(PrecisionPath {
        thetas,
        bounds: covs.bounds.clone(),
        lambda,
        beta,
        objective_history,
        converged,
        iterations,
    })
}

/// Sparse consensus copies where they are positive definite, dense Θ
/// otherwise.
fn output_path(theta: &[Matrix], z0: &[Matrix]) -> Vec<Matrix> {
    theta
        .iter()
        .zip(z0)
        .map(|(t, z)| {
            if cholesky(z).is_ok() {
                z.clone()
            } else {
                t.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        apply_transform, generate_synthetic, GroundTruth, SyntheticKind, SyntheticSpec,
        TransformKind,
    };
    use crate::glasso::{solve_static, support_scores, SUPPORT_TOL};
    use crate::numerics::SeededRng;

    fn tight() -> SolverOptions {
        SolverOptions {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_iter: 20_000,
            ..SolverOptions::default()
        }
    }

    fn random_covs(k: usize, n: usize, len: usize, seed: u64) -> IntervalCovariances {
        let mut rng = SeededRng::new(seed);
        let x = Matrix::from_fn(n, k * len, |_, _| rng.standard_normal());
        segment_covariances(&x, Segmentation::Count(k), 2).unwrap()
    }

    #[test]
    fn equal_intervals() {
        let b = interval_bounds(100, Segmentation::Count(10)).unwrap();
        assert_eq!(b.len(), 10);
        assert!(b.iter().all(|(s, e)| e - s == 10));
    }

    #[test]
    fn last_interval_absorbs_remainder() {
        let b = interval_bounds(105, Segmentation::Count(10)).unwrap();
        assert!(b[..9].iter().all(|(s, e)| e - s == 10));
        assert_eq!(b[9], (90, 105));
        assert_eq!(interval_bounds(105, Segmentation::Length(10)).unwrap(), b);
    }

    #[test]
    fn short_intervals_rejected() {
        let x = Matrix::zeros(2, 15);
        assert!(matches!(
            segment_covariances(&x, Segmentation::Count(10), 2),
            Err(Error::Segmentation(_))
        ));
        assert!(segment_covariances(&x, Segmentation::Count(10), 1).is_ok());
    }

    #[test]
    fn objective_examples() {
        let covs = IntervalCovariances {
            covariances: vec![
                CovarianceEstimate {
                    s: Matrix::identity(2),
                    sample_count: 2
                };
                2
            ],
            bounds: vec![(0, 2), (2, 4)],
        };
        let i2 = Matrix::identity(2);
        let same = tvgl_objective(&[i2.clone(), i2.clone()], &covs, 0.0, 1.0).unwrap();
        assert!((same - 4.0).abs() < 1e-12);
        let two = i2.scale(2.0);
        let diff = tvgl_objective(&[i2.clone(), two.clone()], &covs, 0.0, 1.0).unwrap();
        let decoupled = 2.0 + (-2.0 * 2f64.ln() + 4.0);
        assert!((diff - decoupled - 2.0).abs() < 1e-12);
        assert!(matches!(
            tvgl_objective(&[i2], &covs, 0.0, 1.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn single_interval_matches_static_objective() {
        let covs = random_covs(1, 4, 30, 1);
        let t = Matrix::identity(4).scale(1.3);
        let a = tvgl_objective(std::slice::from_ref(&t), &covs, 0.2, 7.0).unwrap();
        let b = crate::glasso::glasso_objective(&t, &covs.covariances[0].s, 0.2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_decouples() {
        let covs = random_covs(3, 5, 40, 2);
        let path = solve_tvgl(&covs, 0.1, 0.0, &tight()).unwrap();
        assert!(path.converged);
        for (theta, cov) in path.thetas.iter().zip(&covs.covariances) {
            let st = solve_static(&cov.s, 0.1, &tight()).unwrap();
            assert!(theta.sub(&st.theta).frobenius_norm() <= 1e-4);
        }
    }

    #[test]
    fn identical_covariances_give_constant_path() {
        let one = random_covs(1, 4, 50, 3);
        let covs = IntervalCovariances {
            covariances: vec![one.covariances[0].clone(); 4],
            bounds: vec![(0, 50), (50, 100), (100, 150), (150, 200)],
        };
        for beta in [0.0, 0.05, 5.0] {
            let path = solve_tvgl(&covs, 0.1, beta, &SolverOptions::default()).unwrap();
            for w in path.thetas.windows(2) {
                assert!(w[1].sub(&w[0]).frobenius_norm() <= 1e-4);
            }
        }
    }

    #[test]
    fn perturbations_do_not_improve() {
        let covs = random_covs(3, 3, 30, 4);
        let (lambda, beta) = (0.1, 0.5);
        let path = solve_tvgl(&covs, lambda, beta, &tight()).unwrap();
        let base = tvgl_objective(&path.thetas, &covs, lambda, beta).unwrap();
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let perturbed: Vec<Matrix> = path
                .thetas
                .iter()
                .map(|t| {
                    let e = Matrix::from_fn(3, 3, |_, _| 1e-3 * rng.uniform_range(-1.0, 1.0));
                    t.add(&e.symmetrize())
                })
                .collect();
            let v = tvgl_objective(&perturbed, &covs, lambda, beta).unwrap();
            assert!(v >= base - 1e-5, "{v} < {base}");
        }
    }

    #[test]
    fn smoothness_non_increasing_in_beta() {
        let spec = SyntheticSpec::new(SyntheticKind::PiecewiseGgm, 6, 400, 0.3, 6);
        let data = generate_synthetic(&spec).unwrap();
        let z = apply_transform(&data.frame, TransformKind::ZScore, 0..400).unwrap();
        let covs = segment_covariances(&z.values, Segmentation::Count(4), 2).unwrap();
        let mut last = f64::INFINITY;
        for beta in [0.0, 0.05, 0.5, 5.0] {
            let tv = solve_tvgl(&covs, 0.1, beta, &tight())
                .unwrap()
                .total_variation();
            assert!(tv <= last + 1e-9, "beta {beta}: {tv} > {last}");
            last = tv;
        }
    }

    #[test]
    fn huge_beta_gives_pooled_solution() {
        let covs = random_covs(3, 4, 40, 7);
        let path = solve_tvgl(&covs, 0.1, 1e4, &tight()).unwrap();
        let mut pooled = Matrix::zeros(4, 4);
        for c in &covs.covariances {
            pooled.axpy(1.0 / 3.0, &c.s);
        }
        let st = solve_static(&pooled, 0.1, &tight()).unwrap();
        for t in &path.thetas {
            assert!(t.sub(&st.theta).frobenius_norm() <= 5e-2);
        }
    }

    #[test]
    fn beats_decoupled_solution() {
        let covs = random_covs(3, 4, 30, 8);
        let (lambda, beta) = (0.1, 0.5);
        let coupled = solve_tvgl(&covs, lambda, beta, &tight()).unwrap();
        let decoupled = solve_tvgl(&covs, lambda, 0.0, &tight()).unwrap();
        let a = tvgl_objective(&coupled.thetas, &covs, lambda, beta).unwrap();
        let b = tvgl_objective(&decoupled.thetas, &covs, lambda, beta).unwrap();
        assert!(a <= b + 1e-9);
    }

    #[test]
    fn iterates_stay_pd() {
        let covs = random_covs(3, 4, 10, 9);
        for max_iter in 1..6 {
            let opts = SolverOptions {
                max_iter,
                ..SolverOptions::default()
            };
            let path = solve_tvgl(&covs, 0.1, 0.05, &opts).unwrap();
            for t in &path.thetas {
                assert!(cholesky(t).is_ok());
                assert!(t.is_symmetric(1e-12));
            }
        }
    }

    #[test]
    fn recovers_regime_supports() {
        let spec = SyntheticSpec::new(SyntheticKind::PiecewiseGgm, 10, 2000, 0.2, 10);
        let data = generate_synthetic(&spec).unwrap();
        let z = apply_transform(&data.frame, TransformKind::ZScore, 0..2000).unwrap();
        let covs = segment_covariances(&z.values, Segmentation::Count(2), 2).unwrap();
        let path = solve_tvgl(&covs, 0.1, 0.05, &SolverOptions::default()).unwrap();
        let GroundTruth::PrecisionPath { thetas, .. } = data.truth else {
            unreachable!()
        };
        for (est, truth) in path.thetas.iter().zip(&thetas) {
            let (_, _, f1) = support_scores(est, truth, SUPPORT_TOL);
            assert!(f1 >= 0.7, "F1 {f1}");
        }
    }

    #[test]
    fn negative_beta_rejected() {
        let covs = random_covs(2, 3, 10, 0);
        assert!(matches!(
            solve_tvgl(&covs, 0.1, -0.05, &SolverOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let covs = random_covs(3, 3, 10, 11);
        let path = solve_tvgl(&covs, 0.1, 0.05, &SolverOptions::default()).unwrap();
        path.save(dir.path()).unwrap();
        let back = PrecisionPath::load(dir.path()).unwrap();
        assert_eq!(back.thetas, path.thetas);
        assert_eq!(back.bounds, path.bounds);
        assert_eq!(back.beta, 0.05);
    }
}
