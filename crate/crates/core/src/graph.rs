//! From precision matrices to sampled graphs and convolution operators.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::persist::{read_matrix_csv, write_matrix_csv, Metadata};
use crate::tvgl::{parse_range, PrecisionPath};

/// How precision entries become edge probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeProbMode {
    /// `min(1, |Θ_ij| / √(Θ_ii Θ_jj))`: scale invariant, zero iff `Θ_ij = 0`.
    #[default]
    PartialCorrelation,
    /// `Θ_ij` clipped to `[0, 1]`.
    RawClipped,
}

impl fmt::Display for EdgeProbMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeProbMode::PartialCorrelation => "partial-correlation",
            EdgeProbMode::RawClipped => "raw-clipped",
        })
    }
}

impl FromStr for EdgeProbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "partial-correlation" | "partial_correlation" => Ok(EdgeProbMode::PartialCorrelation),
            "raw-clipped" | "raw_clipped" => Ok(EdgeProbMode::RawClipped),
            other => Err(Error::Config(format!(
                "unknown edge probability mode `{other}`"
            ))),
        }
    }
}

/// Symmetric edge probabilities in `[0, 1]` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbMatrix {
    p: Matrix,
}

impl EdgeProbMatrix {
    /// Validates symmetry, range and zero diagonal.
    pub fn new(p: Matrix) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::Dimension(format!(
                "edge probabilities {:?}",
                p.shape()
            )));
        }
        let n = p.rows();
        for i in 0..n {
            if p[(i, i)] != 0.0 {
                return Err(Error::Domain(format!("P[{i},{i}] must be 0")));
            }
            for j in 0..n {
                let v = p[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("P[{i},{j}] = {v} outside [0, 1]")));
                }
                if v != p[(j, i)] {
                    return Err(Error::Domain(format!("P is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { p })
    }

    /// Every off-diagonal probability equal to one.
    pub fn complete(n: usize) -> Self {
        Self {
            p: Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }),
        }
    }

    pub fn n(&self) -> usize {
        self.p.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    /// Mean off-diagonal probability: the expected density of a sample.
    pub fn mean_offdiag(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.p.sum() / (n * (n - 1)) as f64
    }

    /// Fraction of off-diagonal pairs with nonzero probability.
    pub fn support_density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.p.offdiag_nonzeros(0.0) as f64 / (n * (n - 1)) as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_matrix_csv(path, &self.p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p = read_matrix_csv(path)?;
        Self::new(p).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn edge_probs(theta: &Matrix, mode: EdgeProbMode) -> Result<EdgeProbMatrix> {
    if !theta.is_square() {
        return Err(Error::Dimension(format!(
            "precision matrix {:?}",
            theta.shape()
        )));
    }
    let n = theta.rows();
    let diag = theta.diag();
    if mode == EdgeProbMode::PartialCorrelation {
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::Domain(format!(
                "precision diagonal entry {i} is {}, must be positive",
                diag[i]
            )));
        }
    }
    let p = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        // Average the two triangles so P is symmetric bit for bit.
        let t = 0.5 * (theta[(i, j)] + theta[(j, i)]);
        match mode {
            EdgeProbMode::PartialCorrelation => (t.abs() / (diag[i] * diag[j]).sqrt()).min(1.0),
            EdgeProbMode::RawClipped => t.clamp(0.0, 1.0),
        }
    });
    Ok(EdgeProbMatrix { p })
}

/// A symmetric 0/1 adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySample {
    pub a: Matrix,
    /// Seed of the generator that drew it; `None` for thresholded graphs.
    pub seed: Option<u64>,
}

impl AdjacencySample {
    pub fn edge_count(&self) -> usize {
        self.a.offdiag_nonzeros(0.0) / 2
    }

    pub fn density(&self) -> f64 {
        let n = self.a.rows();
        if n < 2 {
            return 0.0;
        }
        self.a.offdiag_nonzeros(0.0) as f64 / (n * (n - 1)) as f64
    }
}

/// One Bernoulli draw per unordered pair `i < j`, mirrored.
pub fn sample_adjacency(p: &EdgeProbMatrix, rng: &mut SeededRng) -> AdjacencySample {
    let n = p.n();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.bernoulli(p.p[(i, j)]) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    AdjacencySample {
        a,
        seed: Some(rng.seed()),
    }
}

/// Deterministic evaluation graph: `A_ij = 1` iff `P_ij ≥ 0.5`.
pub fn threshold_adjacency(p: &EdgeProbMatrix) -> AdjacencySample {
    let a = p.p.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    AdjacencySample { a, seed: None }
}

/// `Â = I + D^{-1/2} A D^{-1/2}` with isolated nodes contributing only the
/// identity.
pub fn normalize_operator(a: &Matrix) -> Matrix {
    let n = a.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Matrix::from_fn(n, n, |i, j| {
        let off = a[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 + off
        } else {
            off
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    Static,
    TimeVarying,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::Static => "static",
            ScheduleMode::TimeVarying => "time-varying",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "static" => Ok(ScheduleMode::Static),
            "time-varying" | "time_varying" => Ok(ScheduleMode::TimeVarying),
            other => Err(Error::Config(format!("unknown schedule mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub start: usize,
    pub end: usize,
    pub probs: EdgeProbMatrix,
}

/// Which edge-probability matrix governs which timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    entries: Vec<ScheduleEntry>,
    mode: ScheduleMode,
}

impl GraphSchedule {
    /// A single matrix that applies at every timestep; `span` is the
    /// training range it was estimated on.
    pub fn single(probs: EdgeProbMatrix, span: (usize, usize)) -> Self {
        Self {
            entries: vec![ScheduleEntry {
                start: span.0,
                end: span.1,
                probs,
            }],
            mode: ScheduleMode::Static,
        }
    }

    /// Contiguous entries, in time order.
    pub fn time_varying(entries: Vec<ScheduleEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Scheduling("schedule has no entries".into()));
        }
        let n = entries[0].probs.n();
        for w in entries.windows(2) {
            if w[0].end != w[1].start {
                return Err(Error::Scheduling(format!(
                    "entries {}..{} and {}..{} are not contiguous",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        for e in &entries {
            if e.end <= e.start {
                return Err(Error::Scheduling(format!(
                    "empty range {}..{}",
                    e.start, e.end
                )));
            }
            if e.probs.n() != n {
                return Err(Error::Dimension("schedule entries differ in size".into()));
            }
        }
        Ok(Self {
            entries,
            mode: ScheduleMode::TimeVarying,
        })
    }

    pub fn from_path(path: &PrecisionPath, mode: EdgeProbMode) -> Result<Self> {
        let entries = path
            .thetas
            .iter()
            .zip(&path.bounds)
            .map(|(theta, &(start, end))| {
                Ok(ScheduleEntry {
                    start,
                    end,
                    probs: edge_probs(theta, mode)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::time_varying(entries)
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries[0].probs.n()
    }

    /// Indices of the entries used for the inclusive window `[lo, hi]`.
    pub fn entries_for_range(&self, lo: usize, hi: usize) -> Result<Vec<usize>> {
        if self.mode == ScheduleMode::Static {
            return Ok(vec![0]);
        }
        let first = &self.entries[0];
        if hi < first.start {
            return Err(Error::Scheduling(format!(
                "window {lo}..={hi} lies before the schedule start {}",
                first.start
            )));
        }
        let last = self.entries.len() - 1;
        let mut idx: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.start <= hi && lo < e.end)
            .map(|(k, _)| k)
            .collect();
        if hi >= self.entries[last].end && idx.last() != Some(&last) {
            idx.push(last);
        }
        Ok(idx)
    }

    /// Mean of the per-entry expected densities.
    pub fn mean_density(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.probs.mean_offdiag())
            .sum::<f64>()
            / self.entries.len() as f64
    }

    /// Writes `p_<k>.csv` per entry plus a `schedule.meta` manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut meta = Metadata::new();
        meta.set("mode", self.mode)
            .set("entries", self.entries.len());
        for (k, e) in self.entries.iter().enumerate() {
            e.probs.save(&dir.join(format!("p_{k:03}.csv")))?;
            meta.set(format!("range.{k}"), format!("{}..{}", e.start, e.end));
        }
        meta.write(&dir.join("schedule.meta"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("schedule.meta");
        let meta = Metadata::read(&meta_path)?;
        let mode: ScheduleMode = meta.parse("mode")?;
        let count: usize = meta.parse("entries")?;
        let mut entries = Vec::with_capacity(count);
        for k in 0..count {
            let (start, end) = parse_range(meta.require(&format!("range.{k}"))?)
                .ok_or_else(|| Error::format(&meta_path, format!("bad range.{k}")))?;
            let probs = EdgeProbMatrix::load(&dir.join(format!("p_{k:03}.csv")))?;
            entries.push(ScheduleEntry { start, end, probs });
        }
        match mode {
            ScheduleMode::Static => {
                if entries.len() != 1 {
                    return Err(Error::format(
                        &meta_path,
                        "static schedule needs exactly one entry",
                    ));
                }
                let e = entries.pop().expect("one entry");
                Ok(Self::single(e.probs, (e.start, e.end)))
            }
            ScheduleMode::TimeVarying => Self::time_varying(entries),
        }
    }
}

/// Graphs for the sample anchored at `t`: one per schedule entry whose range
/// meets `[t − H + 1, t + F]`.
///
/// Training draws a fresh Bernoulli sample per entry; evaluation thresholds
/// at 0.5 instead and consumes no randomness.
pub fn graphs_for_window(
    schedule: &GraphSchedule,
    t: usize,
    history: usize,
    horizon: usize,
    rng: &mut SeededRng,
    eval: bool,
) -> Result<Vec<AdjacencySample>> {
    let lo = (t + 1).saturating_sub(history);
    let hi = t + horizon;
    let idx = schedule.entries_for_range(lo, hi)?;
    Ok(idx
        .into_iter()
        .map(|k| {
            let p = &schedule.entries[k].probs;
            if eval {
                threshold_adjacency(p)
            } else {
                sample_adjacency(p, rng)
            }
        })
        .collect())
}
