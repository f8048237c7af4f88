use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::gcrn::cell::{CellVars, GCGRUCell};
use crate::graph::{graphs_for_window, normalize_operator, GraphSchedule};
use crate::numerics::{Matrix, SeededRng, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_nodes: usize,
    /// Per-node input width: the value plus any temporal features.
    pub d_in: usize,
    pub hidden: usize,
    pub history: usize,
    pub horizon: usize,
}

impl ModelDims {
    pub fn for_dataset(ds: &WindowedDataset, hidden: usize) -> Self {
        Self {
            n_nodes: ds.n_series(),
            d_in: ds.d_in(),
            hidden,
            history: ds.history(),
            horizon: ds.horizon(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.d_in == 0 || self.hidden == 0 {
            return Err(Error::Argument(format!(
                "degenerate model dimensions {self:?}"
            )));
        }
        if self.history == 0 || self.horizon == 0 {
            return Err(Error::Argument(
                "history and horizon must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder-decoder forecaster: one graph-convolutional GRU layer unrolled
/// over the history, a second one unrolled over the horizon, and a shared
/// per-node linear readout.
#[derive(Debug, Clone, PartialEq)]
pub struct GCRNModel {
    pub dims: ModelDims,
    pub encoder: GCGRUCell,
    pub decoder: GCGRUCell,
    /// h×1
    pub out_w: Matrix,
    /// 1×1
    pub out_b: Matrix,
}

/// Inputs for one forecast.
#[derive(Debug, Clone)]
pub struct SampleInput {
    /// `H` blocks of N×d_in, oldest first.
    pub history: Vec<Matrix>,
    /// `F` blocks of N×(d_in − 1) temporal features for the target steps.
    pub future_features: Vec<Matrix>,
}

impl SampleInput {
    pub fn from_dataset(ds: &WindowedDataset, i: usize) -> Self {
        let t = ds.anchor(i);
        let future_features = (1..=ds.horizon())
            .map(|k| {
                ds.temporal_block(t + k)
                    .unwrap_or_else(|| Matrix::zeros(ds.n_series(), 0))
            })
            .collect();
        Self {
            history: ds.input(i),
            future_features,
        }
    }
}

impl GCRNModel {
    /// Xavier-initialized weights, zero biases.
    pub fn new(dims: ModelDims, rng: &mut SeededRng) -> Result<Self> {
        dims.validate()?;
        let encoder = GCGRUCell::xavier(dims.d_in, dims.hidden, rng);
        let decoder = GCGRUCell::xavier(dims.d_in, dims.hidden, rng);
        let limit = (6.0 / (dims.hidden + 1) as f64).sqrt();
        let out_w = Matrix::from_fn(dims.hidden, 1, |_, _| rng.uniform_range(-limit, limit));
        Ok(Self {
            dims,
            encoder,
            decoder,
            out_w,
            out_b: Matrix::zeros(1, 1),
        })
    }

    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            encoder: GCGRUCell::zeros(dims.d_in, dims.hidden),
            decoder: GCGRUCell::zeros(dims.d_in, dims.hidden),
            out_w: Matrix::zeros(dims.hidden, 1),
            out_b: Matrix::zeros(1, 1),
        })
    }

    /// `2·3·((d_in + h)·h + h) + (h + 1)`.
    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count() + self.dims.hidden + 1
    }

    /// Parameter blocks in checkpoint order: encoder (r.W, r.b, z.W, z.b,
    /// c.W, c.b), decoder in the same order, then the readout W and b.
    pub fn blocks(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.encoder.blocks().into_iter().collect();
        out.extend(self.decoder.blocks());
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.encoder.blocks_mut().into_iter().collect();
        out.extend(self.decoder.blocks_mut());
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .flat_map(|m| m.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters for a model with {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for m in self.blocks_mut() {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    fn check_sample(&self, sample: &SampleInput, ops: &[Matrix]) -> Result<()> {
        let d = self.dims;
        if ops.is_empty() {
            return Err(Error::Argument(
                "forward pass needs at least one graph".into(),
            ));
        }
        if ops.iter().any(|o| o.shape() != (d.n_nodes, d.n_nodes)) {
            return Err(Error::Dimension(format!(
                "operators must be {0}×{0}",
                d.n_nodes
            )));
        }
        if sample.history.len() != d.history || sample.future_features.len() != d.horizon {
            return Err(Error::Dimension(format!(
                "sample has {} history and {} horizon steps, model expects {} and {}",
                sample.history.len(),
                sample.future_features.len(),
                d.history,
                d.horizon
            )));
        }
        if sample
            .history
            .iter()
            .any(|x| x.shape() != (d.n_nodes, d.d_in))
            || sample
                .future_features
                .iter()
                .any(|x| x.shape() != (d.n_nodes, d.d_in - 1))
        {
            return Err(Error::Dimension(
                "sample feature widths differ from the model".into(),
            ));
        }
        Ok(())
    }

    /// N×F forecast given normalized operators.
    pub fn predict(&self, sample: &SampleInput, ops: &[Matrix]) -> Result<Matrix> {
        self.check_sample(sample, ops)?;
        let mut tape = Tape::new();
        let vars = ModelVars::constants(&mut tape, self);
        let ops: Vec<Var> = ops.iter().map(|o| tape.constant(o.clone())).collect();
        let out = vars.unroll(&mut tape, &ops, sample);
        Ok(tape.value(out).clone())
    }
}

/// Normalized operators for the sample anchored at `anchor`.
pub fn operators_for(
    schedule: &GraphSchedule,
    anchor: usize,
    dims: &ModelDims,
    rng: &mut SeededRng,
    eval: bool,
) -> Result<Vec<Matrix>> {
    let graphs = graphs_for_window(schedule, anchor, dims.history, dims.horizon, rng, eval)?;
    Ok(graphs.iter().map(|g| normalize_operator(&g.a)).collect())
}

/// Forecast for sample `i` of `ds`, drawing graphs once for the whole pass.
pub fn forward(
    model: &GCRNModel,
    ds: &WindowedDataset,
    i: usize,
    schedule: &GraphSchedule,
    rng: &mut SeededRng,
    eval: bool,
) -> Result<Matrix> {
    if schedule.n() != model.dims.n_nodes {
        return Err(Error::Dimension(format!(
            "schedule has {} nodes, model {}",
            schedule.n(),
            model.dims.n_nodes
        )));
    }
    let ops = operators_for(schedule, ds.anchor(i), &model.dims, rng, eval)?;
    model.predict(&SampleInput::from_dataset(ds, i), &ops)
}

/// Tape handles for every parameter block of a model.
#[derive(Debug, Clone)]
pub(crate) struct ModelVars {
    pub encoder: CellVars,
    pub decoder: CellVars,
    pub out_w: Var,
    pub out_b: Var,
}

impl ModelVars {
    pub fn params(tape: &mut Tape, model: &GCRNModel) -> Self {
        Self {
            encoder: CellVars::params(tape, &model.encoder),
            decoder: CellVars::params(tape, &model.decoder),
            out_w: tape.param(model.out_w.clone()),
            out_b: tape.param(model.out_b.clone()),
        }
    }

    pub fn constants(tape: &mut Tape, model: &GCRNModel) -> Self {
        Self {
            encoder: CellVars::constants(tape, &model.encoder),
            decoder: CellVars::constants(tape, &model.decoder),
            out_w: tape.constant(model.out_w.clone()),
            out_b: tape.constant(model.out_b.clone()),
        }
    }

    /// Same order as [`GCRNModel::blocks`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars().to_vec();
        v.extend(self.decoder.vars());
        v.push(self.out_w);
        v.push(self.out_b);
        v
    }

    /// Encoder over the history, then `F` autoregressive decoder steps whose
    /// input is the previous prediction (the last observation for the
    /// first step) plus the temporal features of the step being predicted.
    pub fn unroll(&self, tape: &mut Tape, ops: &[Var], sample: &SampleInput) -> Var {
        let n = sample.history[0].rows();
        let hidden = tape.value(self.out_w).rows();
        let mut h = tape.constant(Matrix::zeros(n, hidden));
        for x in &sample.history {
            let xv = tape.constant(x.clone());
            h = self.encoder.step(tape, ops, xv, h);
        }
        let last = sample.history.last().expect("history is non-empty");
        let mut prev = tape.constant(last.col_slice(0, 1));
        let mut out: Option<Var> = None;
        for feats in &sample.future_features {
            let input = if feats.cols() == 0 {
                prev
            } else {
                let f = tape.constant(feats.clone());
                tape.concat(prev, f)
            };
            h = self.decoder.step(tape, ops, input, h);
            let hw = tape.matmul(h, self.out_w);
            let y = tape.add_bias(hw, self.out_b);
            out = Some(match out {
                None => y,
                Some(acc) => tape.concat(acc, y),
            });
            prev = y;
        }
        out.expect("horizon is non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, SeriesFrame};
    use crate::graph::EdgeProbMatrix;

    fn dims(n: usize, d_in: usize, hidden: usize, history: usize, horizon: usize) -> ModelDims {
        ModelDims {
            n_nodes: n,
            d_in,
            hidden,
            history,
            horizon,
        }
    }

    fn sample(n: usize, d_in: usize, h: usize, f: usize, rng: &mut SeededRng) -> SampleInput {
        SampleInput {
            history: (0..h)
                .map(|_| Matrix::from_fn(n, d_in, |_, _| rng.standard_normal()))
                .collect(),
            future_features: (0..f)
                .map(|_| Matrix::from_fn(n, d_in - 1, |_, _| rng.uniform()))
                .collect(),
        }
    }

    #[test]
    fn parameter_count_formula() {
        for (d_in, h) in [(1, 4), (3, 32), (3, 64)] {
            let m = GCRNModel::new(dims(5, d_in, h, 3, 2), &mut SeededRng::new(0)).unwrap();
            assert_eq!(m.param_count(), 2 * 3 * ((d_in + h) * h + h) + (h + 1));
            assert_eq!(m.flatten().len(), m.param_count());
        }
    }

    #[test]
    fn zero_model_predicts_bias() {
        let mut m = GCRNModel::zeros(dims(4, 3, 5, 3, 2)).unwrap();
        m.out_b = Matrix::filled(1, 1, 0.75);
        let s = sample(4, 3, 3, 2, &mut SeededRng::new(1));
        let y = m.predict(&s, &[Matrix::identity(4)]).unwrap();
        assert_eq!(y, Matrix::filled(4, 2, 0.75));
    }

    #[test]
    fn horizon_one_is_one_decoder_step() {
        let m = GCRNModel::new(dims(3, 1, 4, 5, 1), &mut SeededRng::new(2)).unwrap();
        let s = sample(3, 1, 5, 1, &mut SeededRng::new(3));
        assert_eq!(
            m.predict(&s, &[Matrix::identity(3)]).unwrap().shape(),
            (3, 1)
        );
    }

    #[test]
    fn flat_round_trip() {
        let m = GCRNModel::new(dims(3, 2, 4, 2, 2), &mut SeededRng::new(4)).unwrap();
        let mut z = GCRNModel::zeros(m.dims).unwrap();
        z.set_flat(&m.flatten()).unwrap();
        assert_eq!(z, m);
        assert!(z.set_flat(&[1.0]).is_err());
    }

    #[test]
    fn seeded_threshold_forward_is_reproducible() {
        let mut rng = SeededRng::new(5);
        let values = Matrix::from_fn(4, 40, |_, _| rng.standard_normal());
        let frame = SeriesFrame::new(values, (0..4).map(|i| format!("s{i}")).collect()).unwrap();
        let ds = make_windows(&frame, 5, 3, true).unwrap();
        let p = EdgeProbMatrix::new(Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.6 }))
            .unwrap();
        let schedule = GraphSchedule::single(p, (0, 28));
        let model = GCRNModel::new(ModelDims::for_dataset(&ds, 6), &mut SeededRng::new(6)).unwrap();
        let a = forward(&model, &ds, 3, &schedule, &mut SeededRng::new(7), true).unwrap();
        let b = forward(&model, &ds, 3, &schedule, &mut SeededRng::new(8), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = SeededRng::new(9);
        let n = 6;
        let m = GCRNModel::new(dims(n, 3, 5, 4, 3), &mut rng).unwrap();
        let s = sample(n, 3, 4, 3, &mut rng);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.bernoulli(0.5) {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
        let op = normalize_operator(&a);
        let perm = [3, 0, 5, 1, 4, 2];
        let permute_rows = |x: &Matrix| Matrix::from_fn(x.rows(), x.cols(), |i, k| x[(perm[i], k)]);
        let op_p = Matrix::from_fn(n, n, |i, j| op[(perm[i], perm[j])]);
        let s_p = SampleInput {
            history: s.history.iter().map(permute_rows).collect(),
            future_features: s.future_features.iter().map(permute_rows).collect(),
        };
        let y = m.predict(&s, &[op]).unwrap();
        let y_p = m.predict(&s_p, &[op_p]).unwrap();
        assert!(permute_rows(&y).max_abs_diff(&y_p) <= 1e-12);
    }

    #[test]
    fn wrong_operator_size_rejected() {
        let m = GCRNModel::new(dims(3, 1, 4, 2, 1), &mut SeededRng::new(10)).unwrap();
        let s = sample(3, 1, 2, 1, &mut SeededRng::new(11));
        assert!(matches!(
            m.predict(&s, &[Matrix::identity(4)]),
            Err(Error::Dimension(_))
        ));
    }
}
