//! Invertible per-series transforms with statistics fitted on a time range.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::persist::{format_f64, Metadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// `ln(1 + x)`
    Log1p,
    /// `(x − min) / (max − min)` with min/max from the fit range.
    MinMax,
    /// `(x − mean) / std` with population statistics from the fit range.
    ZScore,
    /// `y₀ = 0, y_t = x_t − x_{t−1}`; the first value is kept for inversion.
    Difference,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Log1p => "log1p",
            TransformKind::MinMax => "minmax",
            TransformKind::ZScore => "zscore",
            TransformKind::Difference => "difference",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log1p" => Ok(TransformKind::Log1p),
            "minmax" => Ok(TransformKind::MinMax),
            "zscore" => Ok(TransformKind::ZScore),
            "difference" | "diff" => Ok(TransformKind::Difference),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }
}

/// A transform together with the per-series statistics it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedTransform {
    Log1p,
    MinMax { min: Vec<f64>, max: Vec<f64> },
    ZScore { mean: Vec<f64>, std: Vec<f64> },
    Difference { first: Vec<f64> },
}

impl FittedTransform {
    pub fn kind(&self) -> TransformKind {
        match self {
            FittedTransform::Log1p => TransformKind::Log1p,
            FittedTransform::MinMax { .. } => TransformKind::MinMax,
            FittedTransform::ZScore { .. } => TransformKind::ZScore,
            FittedTransform::Difference { .. } => TransformKind::Difference,
        }
    }

    /// Whether each output value depends only on the input value at the
    /// same position.
    pub fn is_pointwise(&self) -> bool {
        !matches!(self, FittedTransform::Difference { .. })
    }

    /// Forward map of one value of series `i`; pointwise transforms only.
    pub fn forward_value(&self, i: usize, x: f64) -> f64 {
        match self {
            FittedTransform::Log1p => x.ln_1p(),
            FittedTransform::MinMax { min, max } => (x - min[i]) / (max[i] - min[i]),
            FittedTransform::ZScore { mean, std } => (x - mean[i]) / std[i],
            FittedTransform::Difference { .. } => panic!("difference is not pointwise"),
        }
    }

    /// Inverse map of one value of series `i`; pointwise transforms only.
    pub fn inverse_value(&self, i: usize, y: f64) -> f64 {
        match self {
            FittedTransform::Log1p => y.exp_m1(),
            FittedTransform::MinMax { min, max } => y * (max[i] - min[i]) + min[i],
            FittedTransform::ZScore { mean, std } => y * std[i] + mean[i],
            FittedTransform::Difference { .. } => panic!("difference is not pointwise"),
        }
    }

    fn apply(&self, values: &Matrix) -> Matrix {
        match self {
            FittedTransform::Difference { .. } => {
                let mut out = Matrix::zeros(values.rows(), values.cols());
                for i in 0..values.rows() {
                    let row = values.row(i);
                    let o = out.row_mut(i);
                    for t in 1..row.len() {
                        o[t] = row[t] - row[t - 1];
                    }
                }
                out
            }
            _ => Matrix::from_fn(values.rows(), values.cols(), |i, t| {
                self.forward_value(i, values[(i, t)])
            }),
        }
    }

    fn invert(&self, values: &Matrix) -> Matrix {
        match self {
            FittedTransform::Difference { first } => {
                let mut out = Matrix::zeros(values.rows(), values.cols());
                for i in 0..values.rows() {
                    let row = values.row(i);
                    let o = out.row_mut(i);
                    let mut level = first[i];
                    o[0] = level;
                    for t in 1..row.len() {
                        level += row[t];
                        o[t] = level;
                    }
                }
                out
            }
            _ => Matrix::from_fn(values.rows(), values.cols(), |i, t| {
                self.inverse_value(i, values[(i, t)])
            }),
        }
    }

    pub(crate) fn write_metadata(&self, meta: &mut Metadata, prefix: &str) {
        meta.set(format!("{prefix}.kind"), self.kind());
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format_f64(*x))
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            FittedTransform::Log1p => {}
            FittedTransform::MinMax { min, max } => {
                meta.set(format!("{prefix}.min"), join(min));
                meta.set(format!("{prefix}.max"), join(max));
            }
            FittedTransform::ZScore { mean, std } => {
                meta.set(format!("{prefix}.mean"), join(mean));
                meta.set(format!("{prefix}.std"), join(std));
            }
            FittedTransform::Difference { first } => {
                meta.set(format!("{prefix}.first"), join(first));
            }
        }
    }

    pub(crate) fn read_metadata(meta: &Metadata, prefix: &str) -> Result<Self> {
        let list = |key: &str| -> Result<Vec<f64>> {
            meta.require(&format!("{prefix}.{key}"))?
                .split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number {s:?} in {prefix}.{key}")))
                })
                .collect()
        };
        let kind: TransformKind = meta.require(&format!("{prefix}.kind"))?.parse()?;
        Ok(match kind {
            TransformKind::Log1p => FittedTransform::Log1p,
            TransformKind::MinMax => FittedTransform::MinMax {
                min: list("min")?,
                max: list("max")?,
            },
            TransformKind::ZScore => FittedTransform::ZScore {
                mean: list("mean")?,
                std: list("std")?,
            },
            TransformKind::Difference => FittedTransform::Difference {
                first: list("first")?,
            },
        })
    }
}

/// Population mean and standard deviation of each row over `range`.
pub fn row_mean_std(values: &Matrix, range: Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let n = (range.end - range.start) as f64;
    let mut means = Vec::with_capacity(values.rows());
    let mut stds = Vec::with_capacity(values.rows());
    for i in 0..values.rows() {
        let row = &values.row(i)[range.clone()];
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    (means, stds)
}

/// Fits `kind` on the columns in `fit_range` and applies it to the whole frame.
pub fn apply_transform(
    frame: &SeriesFrame,
    kind: TransformKind,
    fit_range: Range<usize>,
) -> Result<SeriesFrame> {
    let t = frame.n_steps();
    if fit_range.start >= fit_range.end || fit_range.end > t {
        return Err(Error::Argument(format!(
            "fit range {fit_range:?} is empty or outside 0..{t}"
        )));
    }
    let values = &frame.values;
    let fitted = match kind {
        TransformKind::Log1p => {
            if let Some(bad) = values.data().iter().find(|&&x| x <= -1.0) {
                return Err(Error::Domain(format!(
                    "log1p needs values > -1, found {bad}"
                )));
            }
            FittedTransform::Log1p
        }
        TransformKind::MinMax => {
            let mut min = Vec::new();
            let mut max = Vec::new();
            let mut degenerate = Vec::new();
            for i in 0..values.rows() {
                let row = &values.row(i)[fit_range.clone()];
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi <= lo {
                    degenerate.push(frame.series_names[i].clone());
                }
                min.push(lo);
                max.push(hi);
            }
            if !degenerate.is_empty() {
                return Err(Error::DegenerateSeries(degenerate));
            }
            FittedTransform::MinMax { min, max }
        }
        TransformKind::ZScore => {
            let (mean, std) = row_mean_std(values, fit_range);
            let degenerate: Vec<String> = std
                .iter()
                .enumerate()
                .filter(|(_, s)| !(**s > 0.0))
                .map(|(i, _)| frame.series_names[i].clone())
                .collect();
            if !degenerate.is_empty() {
                return Err(Error::DegenerateSeries(degenerate));
            }
            FittedTransform::ZScore { mean, std }
        }
        TransformKind::Difference => FittedTransform::Difference {
            first: (0..values.rows()).map(|i| values[(i, 0)]).collect(),
        },
    };
    let mut out = frame.clone();
    out.values = fitted.apply(values);
    out.transform_log.push(fitted);
    Ok(out)
}

/// Undoes every logged transform, returning the frame on its original scale.
pub fn invert_transform(frame: &SeriesFrame) -> SeriesFrame {
    let mut out = frame.clone();
    while let Some(tr) = out.transform_log.pop() {
        out.values = tr.invert(&out.values);
    }
    out
}

/// Re-applies `log` to raw values.
pub fn replay_transforms(raw: &Matrix, log: &[FittedTransform]) -> Matrix {
    log.iter().fold(raw.clone(), |v, tr| tr.apply(&v))
}

/// Maps forecasts made on a transformed frame back to the original scale.
///
/// Differencing needs the level at the forecast anchor; it is read from the
/// frame's own history, so the inverter is tied to one frame.
#[derive(Debug, Clone)]
pub struct ForecastInverter {
    log: Vec<FittedTransform>,
    /// For each log position holding a difference, the values just before
    /// that difference was applied.
    levels: Vec<Option<Matrix>>,
}

impl ForecastInverter {
    pub fn new(frame: &SeriesFrame) -> Self {
        let log = frame.transform_log.clone();
        let mut levels = vec![None; log.len()];
        let mut current = frame.values.clone();
        for (k, tr) in log.iter().enumerate().rev() {
            current = tr.invert(&current);
            if !tr.is_pointwise() {
                levels[k] = Some(current.clone());
            }
        }
        Self { log, levels }
    }

    pub fn is_identity(&self) -> bool {
        self.log.is_empty()
    }

    /// `forecast` is N×F with column `f` the prediction for `anchor + 1 + f`.
    pub fn invert(&self, forecast: &Matrix, anchor: usize) -> Matrix {
        let mut out = forecast.clone();
        for (k, tr) in self.log.iter().enumerate().rev() {
            match &self.levels[k] {
                None => {
                    out = Matrix::from_fn(out.rows(), out.cols(), |i, f| {
                        tr.inverse_value(i, out[(i, f)])
                    })
                }
                Some(levels) => {
                    for i in 0..out.rows() {
                        let mut level = levels[(i, anchor)];
                        for f in 0..out.cols() {
                            level += out[(i, f)];
                            out[(i, f)] = level;
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn frame(rows: &[&[f64]]) -> SeriesFrame {
        let m = Matrix::from_rows(rows);
        let names = (0..m.rows()).map(|i| format!("s{i}")).collect();
        SeriesFrame::new(m, names).unwrap()
    }

    fn random_frame(seed: u64, n: usize, t: usize) -> SeriesFrame {
        let mut rng = SeededRng::new(seed);
        let m = Matrix::from_fn(n, t, |_, _| rng.uniform_range(0.0, 50.0));
        SeriesFrame::new(m, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
    }

    #[test]
    fn zscore_analytic() {
        let f = frame(&[&[1.0, 2.0, 3.0], &[0.0, 1.0, 5.0]]);
        let z = apply_transform(&f, TransformKind::ZScore, 0..3).unwrap();
        let expected = 1.5f64.sqrt();
        assert!((z.values[(0, 0)] + expected).abs() < 1e-12);
        assert!(z.values[(0, 1)].abs() < 1e-12);
        assert!((z.values[(0, 2)] - expected).abs() < 1e-12);
        assert!((expected - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn log1p_analytic() {
        let f = frame(&[&[0.0, std::f64::consts::E - 1.0], &[1.0, 2.0]]);
        let y = apply_transform(&f, TransformKind::Log1p, 0..2).unwrap();
        assert_eq!(y.values[(0, 0)], 0.0);
        assert!((y.values[(0, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zscore_statistics_hold_on_fit_range() {
        let f = random_frame(5, 4, 200);
        let z = apply_transform(&f, TransformKind::ZScore, 0..140).unwrap();
        let (m, s) = row_mean_std(&z.values, 0..140);
        for i in 0..4 {
            assert!(m[i].abs() < 1e-9 && (s[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn minmax_training_range_in_unit_interval() {
        let f = random_frame(6, 3, 100);
        let y = apply_transform(&f, TransformKind::MinMax, 0..70).unwrap();
        for i in 0..3 {
            assert!(y.values.row(i)[..70]
                .iter()
                .all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn zero_variance_lists_the_series() {
        let f = frame(&[&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]]);
        match apply_transform(&f, TransformKind::ZScore, 0..3) {
            Err(Error::DegenerateSeries(names)) => assert_eq!(names, ["s0", "s2"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn roundtrip_every_kind_seed_3() {
        let f = random_frame(3, 5, 60);
        for kind in [
            TransformKind::Log1p,
            TransformKind::MinMax,
            TransformKind::ZScore,
            TransformKind::Difference,
        ] {
            let y = apply_transform(&f, kind, 0..42).unwrap();
            let back = invert_transform(&y);
            assert!(back.transform_log.is_empty());
            let dev = back.values.max_abs_diff(&f.values);
            assert!(dev <= 1e-9, "{kind}: {dev}");
        }
    }

    #[test]
    fn chained_roundtrip_and_replay() {
        let f = random_frame(9, 3, 80);
        let mut y = f.clone();
        for kind in [
            TransformKind::Log1p,
            TransformKind::Difference,
            TransformKind::ZScore,
        ] {
            y = apply_transform(&y, kind, 0..56).unwrap();
        }
        let replay = replay_transforms(&f.values, &y.transform_log);
        assert!(replay.max_abs_diff(&y.values) <= 1e-12);
        assert!(invert_transform(&y).values.max_abs_diff(&f.values) <= 1e-9 * 50.0);
    }

    #[test]
    fn forecast_inverter_recovers_original_targets() {
        let f = random_frame(4, 3, 50);
        let mut y = f.clone();
        for kind in [
            TransformKind::Log1p,
            TransformKind::Difference,
            TransformKind::ZScore,
        ] {
            y = apply_transform(&y, kind, 0..35).unwrap();
        }
        let inv = ForecastInverter::new(&y);
        let anchor = 20;
        let target = y.slice(anchor + 1..anchor + 4);
        let back = inv.invert(&target, anchor);
        let original = f.slice(anchor + 1..anchor + 4);
        assert!(back.max_abs_diff(&original) < 1e-9);
    }
}
