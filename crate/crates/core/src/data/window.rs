use std::sync::Arc;

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Number of auxiliary temporal features (day-in-week, hour-in-day).
pub const TEMPORAL_FEATURES: usize = 2;

#[derive(Debug)]
struct WindowSource {
    values: Matrix,
    /// T×k, shared by every node.
    features: Option<Matrix>,
}

/// Supervised `(history, horizon)` samples over one frame.
///
/// Samples are materialized on demand from a shared copy of the frame, so
/// splitting is cheap and no sample owns its data.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    source: Arc<WindowSource>,
    anchors: Vec<usize>,
    history: usize,
    horizon: usize,
}

/// Builds every window with anchor `t ∈ [H−1, T−F−1]`: input columns
/// `t−H+1..=t`, target columns `t+1..=t+F`.
pub fn make_windows(
    frame: &SeriesFrame,
    history: usize,
    horizon: usize,
    include_temporal_features: bool,
) -> Result<WindowedDataset> {
    if history == 0 || horizon == 0 {
        return Err(Error::Argument(
            "history and horizon must be at least 1".into(),
        ));
    }
    let t = frame.n_steps();
    if history + horizon > t {
        return Err(Error::InsufficientData(format!(
            "history {history} + horizon {horizon} exceeds series length {t}"
        )));
    }
    let features = include_temporal_features.then(|| {
        Matrix::from_fn(t, TEMPORAL_FEATURES, |step, k| {
            frame.temporal_features(step)[k]
        })
    });
    let anchors = (history - 1..t - horizon).collect();
    Ok(WindowedDataset {
        source: Arc::new(WindowSource {
            values: frame.values.clone(),
            features,
        }),
        anchors,
        history,
        horizon,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_series(&self) -> usize {
        self.source.values.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.source.values.cols()
    }

    /// Input width per node and timestep: the value plus temporal features.
    pub fn d_in(&self) -> usize {
        1 + self.n_features()
    }

    pub fn n_features(&self) -> usize {
        self.source.features.as_ref().map_or(0, Matrix::cols)
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn anchor(&self, i: usize) -> usize {
        self.anchors[i]
    }

    pub fn values(&self) -> &Matrix {
        &self.source.values
    }

    /// N×d_in node features at absolute timestep `step`.
    pub fn step_features(&self, step: usize, value: &[f64]) -> Matrix {
        let n = self.n_series();
        let d = self.d_in();
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            m[(i, 0)] = value[i];
            if let Some(f) = &self.source.features {
                for k in 0..f.cols() {
                    m[(i, 1 + k)] = f[(step, k)];
                }
            }
        }
        m
    }

    /// Temporal features at `step` broadcast to N rows (N×k), or `None`
    /// when the dataset has no auxiliary features.
    pub fn temporal_block(&self, step: usize) -> Option<Matrix> {
        self.source
            .features
            .as_ref()
            .map(|f| Matrix::from_fn(self.n_series(), f.cols(), |_, k| f[(step, k)]))
    }

    /// The `H` input matrices (N×d_in) of sample `i`, oldest first.
    pub fn input(&self, i: usize) -> Vec<Matrix> {
        let t = self.anchors[i];
        (t + 1 - self.history..=t)
            .map(|step| {
                let col = self.source.values.col_vec(step);
                self.step_features(step, &col)
            })
            .collect()
    }

    /// N×H raw input values of sample `i`.
    pub fn input_values(&self, i: usize) -> Matrix {
        let t = self.anchors[i];
        self.source.values.col_slice(t + 1 - self.history, t + 1)
    }

    /// N×F target of sample `i`.
    pub fn target(&self, i: usize) -> Matrix {
        let t = self.anchors[i];
        self.source.values.col_slice(t + 1, t + 1 + self.horizon)
    }

    /// Timesteps read as targets by sample `i`.
    pub fn target_range(&self, i: usize) -> std::ops::Range<usize> {
        let t = self.anchors[i];
        t + 1..t + 1 + self.horizon
    }

    /// Subset with the given anchors (shares data).
    pub fn with_anchors(&self, anchors: Vec<usize>) -> WindowedDataset {
        WindowedDataset {
            source: Arc::clone(&self.source),
            anchors,
            history: self.history,
            horizon: self.horizon,
        }
    }
}
