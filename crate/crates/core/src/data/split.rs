use crate::data::WindowedDataset;
use crate::error::{Error, Result};

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config(format!(
                "split fractions must be nonnegative: {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` counts for `n` items: floor the first two, the
    /// remainder goes to test.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let val = floor(self.val).min(n - train);
        (train, val, n - train - val)
    }

    /// Timesteps `0..end` that belong to the training portion of a length-`t`
    /// series; transforms and covariance estimates are fitted here.
    pub fn fit_range(&self, t: usize) -> std::ops::Range<usize> {
        0..self.counts(t).0.max(2).min(t)
    }
}

/// Splits samples by anchor order: earliest to train, then validation, then
/// test.
///
/// Sample counts follow [`SplitSpec::counts`]. So that no target timestep is
/// shared across splits, the first `F − 1` samples of the validation and
/// test portions are dropped (nothing is dropped when `F = 1`).
pub fn chronological_split(
    dataset: &WindowedDataset,
    spec: &SplitSpec,
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    spec.validate()?;
    let (n_train, n_val, _) = spec.counts(dataset.len());
    let embargo = dataset.horizon() - 1;
    let anchors = dataset.anchors();
    let train = anchors[..n_train].to_vec();
    let val: Vec<usize> = anchors[n_train..n_train + n_val]
        .iter()
        .skip(embargo)
        .copied()
        .collect();
    let test: Vec<usize> = anchors[n_train + n_val..]
        .iter()
        .skip(embargo)
        .copied()
        .collect();
    for (name, part) in [("train", &train), ("validation", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::Config(format!(
                "{name} split is empty ({} samples, fractions {:?})",
                dataset.len(),
                spec
            )));
        }
    }
    Ok((
        dataset.with_anchors(train),
        dataset.with_anchors(val),
        dataset.with_anchors(test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, SeriesFrame};
    use crate::numerics::Matrix;
    use std::collections::HashSet;

    fn dataset(samples: usize, h: usize, f: usize) -> WindowedDataset {
        let t = samples + h + f - 1;
        let m = Matrix::from_fn(2, t, |i, s| (s * 2 + i) as f64);
        let frame = SeriesFrame::new(m, vec!["a".into(), "b".into()]).unwrap();
        make_windows(&frame, h, f, false).unwrap()
    }

    #[test]
    fn hundred_samples() {
        let (a, b, c) = chronological_split(&dataset(100, 3, 1), &SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (70, 10, 20));
    }

    #[test]
    fn ten_samples_floor_then_remainder() {
        assert_eq!(SplitSpec::default().counts(10), (7, 1, 2));
        let (a, b, c) = chronological_split(&dataset(10, 2, 1), &SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(SplitSpec::new(0.7, 0.2, 0.2).is_err());
        assert!(SplitSpec::new(0.7, 0.1, 0.2).is_ok());
    }

    #[test]
    fn empty_split_is_config_error() {
        let spec = SplitSpec::new(0.95, 0.0, 0.05).unwrap();
        assert!(matches!(
            chronological_split(&dataset(20, 2, 1), &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn splits_are_ordered_and_target_disjoint() {
        for horizon in [1, 3, 7] {
            let ds = dataset(200, 5, horizon);
            let (a, b, c) = chronological_split(&ds, &SplitSpec::default()).unwrap();
            let targets = |d: &WindowedDataset| -> HashSet<usize> {
                (0..d.len()).flat_map(|i| d.target_range(i)).collect()
            };
            let (ta, tb, tc) = (targets(&a), targets(&b), targets(&c));
            assert_eq!(ta.intersection(&tb).count(), 0);
            assert_eq!(ta.intersection(&tc).count(), 0);
            assert_eq!(tb.intersection(&tc).count(), 0);
            assert!(a.anchors().last() < b.anchors().first());
            assert!(b.anchors().last() < c.anchors().first());
        }
    }
}
