//! Synthetic panels with known structure, used as test oracles.

use std::fmt;
use std::str::FromStr;

use chrono::TimeDelta;

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// i.i.d. draws from `N(0, Θ⁻¹)`.
    Ggm,
    /// `X_{t+1} = C·X_t + ε`.
    Var1,
    /// Independent GGM regimes over contiguous time blocks.
    PiecewiseGgm,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Ggm => "ggm",
            SyntheticKind::Var1 => "var1",
            SyntheticKind::PiecewiseGgm => "piecewise-ggm",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ggm" => Ok(SyntheticKind::Ggm),
            "var1" => Ok(SyntheticKind::Var1),
            "piecewise-ggm" | "piecewise_ggm" => Ok(SyntheticKind::PiecewiseGgm),
            other => Err(Error::Config(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub t: usize,
    /// Fraction of off-diagonal pairs that carry an edge.
    pub edge_density: f64,
    /// VAR innovations have standard deviation `1 / snr`; unused by GGM kinds.
    pub snr: f64,
    pub seed: u64,
    /// Piecewise kind: number of regimes, split evenly unless
    /// `change_points` is given.
    pub regimes: usize,
    pub change_points: Option<Vec<usize>>,
    /// VAR kind: spectral radius bound of `C`; 0 gives white noise.
    pub var_radius: f64,
    /// Largest diagonal shift allowed to make `Θ` positive definite.
    pub max_diag_loading: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, t: usize, edge_density: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            t,
            edge_density,
            snr: 1.0,
            seed,
            regimes: 2,
            change_points: None,
            var_radius: 0.9,
            max_diag_loading: 100.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 2 {
            return Err(Error::Generation(format!(
                "need n >= 2 and t >= 2, got n={} t={}",
                self.n, self.t
            )));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(Error::Generation(format!(
                "edge density {} outside [0, 1]",
                self.edge_density
            )));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Generation("snr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.var_radius) {
            return Err(Error::Generation(format!(
                "VAR spectral radius {} must lie in [0, 1)",
                self.var_radius
            )));
        }
        if self.kind == SyntheticKind::PiecewiseGgm && self.regimes == 0 {
            return Err(Error::Generation(
                "piecewise-ggm needs at least one regime".into(),
            ));
        }
        Ok(())
    }

    /// `(start, end)` timestep ranges of each regime.
    pub fn regime_bounds(&self) -> Result<Vec<(usize, usize)>> {
        let cuts: Vec<usize> = match &self.change_points {
            Some(cp) => cp.clone(),
            None => (1..self.regimes)
                .map(|r| r * self.t / self.regimes)
                .collect(),
        };
        let mut bounds = Vec::new();
        let mut start = 0;
        for &c in &cuts {
            if c <= start || c >= self.t {
                return Err(Error::Generation(format!("invalid change point {c}")));
            }
            bounds.push((start, c));
            start = c;
        }
        bounds.push((start, self.t));
        Ok(bounds)
    }
}

#[derive(Debug, Clone)]
pub enum GroundTruth {
    Precision(Matrix),
    PrecisionPath {
        thetas: Vec<Matrix>,
        bounds: Vec<(usize, usize)>,
    },
    VarCoefficients(Matrix),
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub frame: SeriesFrame,
    pub truth: GroundTruth,
}

/// Random symmetric 0/1 pattern with `round(density · n(n−1)/2)` edges.
pub fn random_edge_pattern(n: usize, density: f64, rng: &mut SeededRng) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let m = (density * pairs.len() as f64).round() as usize;
    rng.shuffle(&mut pairs);
    pairs.truncate(m);
    pairs.sort_unstable();
    pairs
}

/// Sparse symmetric positive-definite precision matrix.
///
/// Edge weights are `±U[0.5, 1]`. The diagonal is set to
/// `max(1, 1 − λ_min(W))` where `W` is the off-diagonal part, so the
/// smallest eigenvalue is at least 1. Loading only to the 0.1 floor leaves
/// `Θ` so ill-conditioned that indirect correlations swamp the true edges.
pub fn random_sparse_precision(
    n: usize,
    density: f64,
    max_loading: f64,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let mut theta = Matrix::zeros(n, n);
    for (i, j) in random_edge_pattern(n, density, rng) {
        let magnitude = rng.uniform_range(0.5, 1.0);
        let w = if rng.bernoulli(0.5) {
            magnitude
        } else {
            -magnitude
        };
        theta[(i, j)] = w;
        theta[(j, i)] = w;
    }
    let lambda_min = sym_eig(&theta)?.min_eigenvalue();
    let loading = (1.0 - lambda_min).max(1.0);
    if loading > max_loading {
        return Err(Error::Generation(format!(
            "density {density} needs diagonal loading {loading:.3} above the cap {max_loading}"
        )));
    }
    for i in 0..n {
        theta[(i, i)] = loading;
    }
    Ok(theta)
}

/// `t` i.i.d. columns from `N(0, Θ⁻¹)`.
pub fn sample_gaussian(theta: &Matrix, t: usize, rng: &mut SeededRng) -> Result<Matrix> {
    let eig = sym_eig(theta)?;
    if eig.min_eigenvalue() <= 0.0 {
        return Err(Error::Domain(
            "precision matrix is not positive definite".into(),
        ));
    }
    let root = eig.map_eigenvalues(|l| 1.0 / l.sqrt());
    let n = theta.rows();
    let z = Matrix::from_fn(n, t, |_, _| rng.standard_normal());
    Ok(root.matmul(&z))
}

/// Relative size of the cross-series VAR weights.
pub const VAR_COUPLING: f64 = 0.12;

/// Sparse VAR(1) matrix `C = −r·I + B` with spectral radius exactly `r`.
///
/// `B` carries one weight `±r·VAR_COUPLING·U[0.5, 1]` per sampled edge,
/// oriented along a random node order so that `B` is nilpotent and the
/// eigenvalues of `C` are all `−r`. The negative self term makes every
/// series alternate around its mean, which keeps the process far from the
/// random-walk regime where the historical mean is already near optimal.
pub fn random_var_coefficients(n: usize, density: f64, radius: f64, rng: &mut SeededRng) -> Matrix {
    let edges = random_edge_pattern(n, density, rng);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut rank = vec![0; n];
    for (pos, &node) in order.iter().enumerate() {
        rank[node] = pos;
    }
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = -radius;
    }
    for (i, j) in edges {
        let magnitude = radius * VAR_COUPLING * rng.uniform_range(0.5, 1.0);
        let w = if rng.bernoulli(0.5) {
            magnitude
        } else {
            -magnitude
        };
        // the later node in the order is driven by the earlier one
        let (to, from) = if rank[i] > rank[j] { (i, j) } else { (j, i) };
        c[(to, from)] = w;
    }
    c
}

const VAR_BURN_IN: usize = 200;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let names: Vec<String> = (0..spec.n).map(|i| format!("s{i}")).collect();
    let (values, truth) = match spec.kind {
        SyntheticKind::Ggm => {
            let theta = random_sparse_precision(
                spec.n,
                spec.edge_density,
                spec.max_diag_loading,
                &mut rng,
            )?;
            let x = sample_gaussian(&theta, spec.t, &mut rng)?;
            (x, GroundTruth::Precision(theta))
        }
        SyntheticKind::PiecewiseGgm => {
            let bounds = spec.regime_bounds()?;
            let mut thetas = Vec::with_capacity(bounds.len());
            let mut x = Matrix::zeros(spec.n, spec.t);
            for &(start, end) in &bounds {
                let theta = random_sparse_precision(
                    spec.n,
                    spec.edge_density,
                    spec.max_diag_loading,
                    &mut rng,
                )?;
                let block = sample_gaussian(&theta, end - start, &mut rng)?;
                for i in 0..spec.n {
                    x.row_mut(i)[start..end].copy_from_slice(block.row(i));
                }
                thetas.push(theta);
            }
            (x, GroundTruth::PrecisionPath { thetas, bounds })
        }
        SyntheticKind::Var1 => {
            let c = random_var_coefficients(spec.n, spec.edge_density, spec.var_radius, &mut rng);
            let sigma = 1.0 / spec.snr;
            let mut state = vec![0.0; spec.n];
            let mut x = Matrix::zeros(spec.n, spec.t);
            for step in 0..VAR_BURN_IN + spec.t {
                let mut next = vec![0.0; spec.n];
                for i in 0..spec.n {
                    let mut v = sigma * rng.standard_normal();
                    for (j, s) in state.iter().enumerate() {
                        v += c[(i, j)] * s;
                    }
                    next[i] = v;
                }
                state = next;
                if step >= VAR_BURN_IN {
                    for i in 0..spec.n {
                        x[(i, step - VAR_BURN_IN)] = state[i];
                    }
                }
            }
            (x, GroundTruth::VarCoefficients(c))
        }
    };
    let frame = SeriesFrame::with_time(
        values,
        names,
        chrono::NaiveDate::from_ymd_opt(2020, 1, 6)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .expect("valid literal date"),
        TimeDelta::hours(1),
    )?;
    Ok(SyntheticData { frame, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation(x: &Matrix) -> Matrix {
        let (mean, std) = crate::data::row_mean_std(x, 0..x.cols());
        let t = x.cols() as f64;
        Matrix::from_fn(x.rows(), x.rows(), |i, j| {
            let mut s = 0.0;
            for k in 0..x.cols() {
                s += (x[(i, k)] - mean[i]) * (x[(j, k)] - mean[j]);
            }
            s / t / (std[i] * std[j])
        })
    }

    #[test]
    fn precision_is_pd_with_requested_density() {
        let mut rng = SeededRng::new(1);
        let theta = random_sparse_precision(20, 0.15, 100.0, &mut rng).unwrap();
        assert!(theta.is_symmetric(0.0));
        assert!(sym_eig(&theta).unwrap().min_eigenvalue() >= 1.0 - 1e-9);
        assert_eq!(
            theta.offdiag_nonzeros(0.0) / 2,
            (0.15f64 * 190.0).round() as usize
        );
    }

    #[test]
    fn density_zero_gives_uncorrelated_series() {
        let mut spec = SyntheticSpec::new(SyntheticKind::Ggm, 5, 5000, 0.0, 4);
        spec.seed = 4;
        let data = generate_synthetic(&spec).unwrap();
        match &data.truth {
            GroundTruth::Precision(theta) => assert_eq!(theta.offdiag_nonzeros(0.0), 0),
            _ => unreachable!(),
        }
        let c = correlation(&data.frame.values);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(c[(i, j)].abs() <= 0.1, "{i},{j}: {}", c[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn loading_cap_is_enforced() {
        let mut spec = SyntheticSpec::new(SyntheticKind::Ggm, 30, 10, 1.0, 0);
        spec.max_diag_loading = 2.0;
        assert!(matches!(
            generate_synthetic(&spec),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn var_coefficients_are_stable() {
        let mut rng = SeededRng::new(8);
        let c = random_var_coefficients(12, 0.3, 0.9, &mut rng);
        let edges = (0..12)
            .flat_map(|i| (0..12).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && c[(i, j)] != 0.0)
            .count();
        assert_eq!(edges, 20);
        // (C + rI) is nilpotent, so every eigenvalue equals −r
        let mut shifted = c.clone();
        for i in 0..12 {
            shifted[(i, i)] += 0.9;
        }
        let mut power = shifted.clone();
        for _ in 1..12 {
            power = power.matmul(&shifted);
        }
        assert_eq!(power.max_abs(), 0.0);
        // and the powers of C decay at rate r
        let mut p = c.clone();
        for _ in 1..400 {
            p = p.matmul(&c);
        }
        assert!(p.max_abs() < 1e-6, "{}", p.max_abs());
    }

    #[test]
    fn var_radius_zero_is_white_noise() {
        let mut spec = SyntheticSpec::new(SyntheticKind::Var1, 4, 100, 0.5, 2);
        spec.var_radius = 0.0;
        let data = generate_synthetic(&spec).unwrap();
        match data.truth {
            GroundTruth::VarCoefficients(c) => assert_eq!(c.max_abs(), 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn piecewise_regimes_cover_the_series() {
        let spec = SyntheticSpec::new(SyntheticKind::PiecewiseGgm, 6, 101, 0.3, 3);
        let data = generate_synthetic(&spec).unwrap();
        match data.truth {
            GroundTruth::PrecisionPath { thetas, bounds } => {
                assert_eq!(bounds, vec![(0, 50), (50, 101)]);
                assert_eq!(thetas.len(), 2);
                assert_ne!(thetas[0], thetas[1]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec::new(SyntheticKind::Var1, 5, 50, 0.3, 9);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.frame.values, b.frame.values);
    }
}
