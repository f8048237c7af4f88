use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info};

use crate::data::{ForecastInverter, WindowedDataset};
use crate::error::{Error, Result};
use crate::gcrn::model::{operators_for, GCRNModel, ModelVars, SampleInput};
use crate::graph::GraphSchedule;
use crate::numerics::{Matrix, SeededRng, Tape};
use crate::persist::{format_f64, write_text};

/// Graphs used whenever the model is scored rather than trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalGraphMode {
    /// `A_ij = 1` iff `P_ij ≥ 0.5`; no randomness.
    #[default]
    Threshold,
    /// Bernoulli draws from a generator reset to the same seed on every
    /// evaluation, so repeated evaluations still agree.
    Resample,
}

impl fmt::Display for EvalGraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalGraphMode::Threshold => "threshold",
            EvalGraphMode::Resample => "resample",
        })
    }
}

impl FromStr for EvalGraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "threshold" => Ok(EvalGraphMode::Threshold),
            "resample" => Ok(EvalGraphMode::Resample),
            other => Err(Error::Config(format!("unknown eval graph mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_graph_mode: EvalGraphMode,
    /// When false, epoch timings are recorded as 0 so that reruns produce
    /// byte-identical histories.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            max_epochs: 100,
            patience: 15,
            batch_size: 32,
            seed: 0,
            eval_graph_mode: EvalGraphMode::Threshold,
            record_timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `(1/F)·Σ |pred − target|` over all N·F entries (no division by N).
pub fn mae_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(pred.sub(target).l1_norm() / pred.cols() as f64)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((p, g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
    /// Wall time of the training pass (validation excluded).
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(f64::NAN, |e| e.val_mae)
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.epoch_seconds).sum::<f64>() / self.epochs.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mae,val_mae,epoch_seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.epoch,
                format_f64(e.train_mae),
                format_f64(e.val_mae),
                format_f64(e.epoch_seconds)
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: GCRNModel,
    pub history: TrainHistory,
}

/// Independent generator streams so that, e.g., changing the evaluation
/// mode never shifts the training draws.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_GRAPHS: u64 = 2;
const STREAM_EVAL: u64 = 3;

fn eval_rng(seed: u64) -> SeededRng {
    SeededRng::new(seed).fork(STREAM_EVAL)
}

/// Mean [`mae_loss`] over a dataset with evaluation-mode graphs.
pub fn dataset_loss(
    model: &GCRNModel,
    ds: &WindowedDataset,
    schedule: &GraphSchedule,
    mode: EvalGraphMode,
    seed: u64,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let mut rng = eval_rng(seed);
    let threshold = mode == EvalGraphMode::Threshold;
    let mut total = 0.0;
    for i in 0..ds.len() {
        let ops = operators_for(schedule, ds.anchor(i), &model.dims, &mut rng, threshold)?;
        let pred = model.predict(&SampleInput::from_dataset(ds, i), &ops)?;
        total += mae_loss(&pred, &ds.target(i))?;
    }
    Ok(total / ds.len() as f64)
}

/// [`mae_loss`] of one forecast and its gradient with respect to every
/// parameter block, in [`GCRNModel::blocks`] order.
pub fn loss_and_gradients(
    model: &GCRNModel,
    sample: &SampleInput,
    ops: &[Matrix],
    target: &Matrix,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let vars = ModelVars::params(&mut tape, model);
    let ops: Vec<_> = ops.iter().map(|o| tape.constant(o.clone())).collect();
    let pred = vars.unroll(&mut tape, &ops, sample);
    if tape.value(pred).shape() != target.shape() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            tape.value(pred).shape(),
            target.shape()
        )));
    }
    let target = tape.constant(target.clone());
    let diff = tape.sub(pred, target);
    let l1 = tape.l1(diff);
    let loss = tape.scale(l1, 1.0 / model.dims.horizon as f64);
    let value = tape.value(loss)[(0, 0)];
    let mut g = tape.backward(loss)?;
    let grads = vars
        .vars()
        .into_iter()
        .zip(model.blocks())
        .map(|(v, m)| {
            g.take(v)
                .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))
        })
        .collect();
    Ok((value, grads))
}

/// Mini-batch Adam on the forecasting loss with early stopping on the
/// validation loss.
///
/// Each training forward pass draws fresh graphs from the schedule. After
/// every epoch the validation loss is computed with evaluation graphs; the
/// run stops once `patience` consecutive epochs fail to improve on the best
/// value so far, and the best parameters are returned.
pub fn train(
    model: GCRNModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    schedule: &GraphSchedule,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InsufficientData(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if schedule.n() != model.dims.n_nodes {
        return Err(Error::Dimension(format!(
            "schedule has {} nodes, model {}",
            schedule.n(),
            model.dims.n_nodes
        )));
    }
    let root = SeededRng::new(config.seed);
    let mut shuffle_rng = root.fork(STREAM_SHUFFLE);
    let mut graph_rng = root.fork(STREAM_GRAPHS);

    let mut model = model;
    let shapes: Vec<(usize, usize)> = model.blocks().iter().map(|m| m.shape()).collect();
    let mut adam = Adam::new(config.learning_rate, &shapes);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut history = TrainHistory::default();
    let mut wait = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
            for &i in batch {
                let ops_m = operators_for(
                    schedule,
                    train_set.anchor(i),
                    &model.dims,
                    &mut graph_rng,
                    false,
                )?;
                let sample = SampleInput::from_dataset(train_set, i);
                let (value, g) = loss_and_gradients(&model, &sample, &ops_m, &train_set.target(i))?;
                if !value.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: format!("loss became {value}"),
                    });
                }
                loss_sum += value;
                for (acc, d) in grads.iter_mut().zip(g) {
                    acc.add_assign(&d);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g = g.scale(inv);
            }
            adam.step(&mut model.blocks_mut(), &grads);
        }
        let seconds = if config.record_timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let train_mae = loss_sum / train_set.len() as f64;
        let val_mae = dataset_loss(
            &model,
            val_set,
            schedule,
            config.eval_graph_mode,
            config.seed,
        )?;
        if !val_mae.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("validation loss became {val_mae}"),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_mae,
            val_mae,
            epoch_seconds: seconds,
        });
        debug!("epoch {epoch}: train {train_mae:.6} val {val_mae:.6} ({seconds:.3}s)");
        if val_mae < best_val {
            best_val = val_mae;
            best = model.clone();
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                info!(
                    "early stop at epoch {epoch}; best epoch {}",
                    history.best_epoch
                );
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
    })
}

/// Per-horizon errors on both the modelling scale and the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMetrics {
    /// `mae[k]`: mean over samples of `(1/N)·Σ_j |error|` at step `k + 1`.
    pub mae_transformed: Vec<f64>,
    pub mae_original: Vec<f64>,
}

impl ForecastMetrics {
    pub fn horizon(&self) -> usize {
        self.mae_transformed.len()
    }

    /// MAE at step `f` (1-based), original scale.
    pub fn at(&self, f: usize) -> Result<f64> {
        check_step(f, self.horizon())?;
        Ok(self.mae_original[f - 1])
    }

    pub fn at_transformed(&self, f: usize) -> Result<f64> {
        check_step(f, self.horizon())?;
        Ok(self.mae_transformed[f - 1])
    }

    pub fn average_original(&self) -> f64 {
        mean(&self.mae_original)
    }

    pub fn average_transformed(&self) -> f64 {
        mean(&self.mae_transformed)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_step(f: usize, horizon: usize) -> Result<()> {
    if f == 0 || f > horizon {
        return Err(Error::Argument(format!(
            "horizon step {f} outside 1..={horizon}"
        )));
    }
    Ok(())
}

/// Scores any forecaster over every sample of `ds`.
///
/// `predict(i)` returns the N×F forecast for sample `i` on the modelling
/// scale; errors on the original scale use `inverter` on both forecast and
/// target.
pub fn forecast_metrics(
    ds: &WindowedDataset,
    inverter: &ForecastInverter,
    mut predict: impl FnMut(usize) -> Result<Matrix>,
) -> Result<ForecastMetrics> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("empty evaluation set".into()));
    }
    let f = ds.horizon();
    let n = ds.n_series() as f64;
    let mut tr = vec![0.0; f];
    let mut orig = vec![0.0; f];
    for i in 0..ds.len() {
        let pred = predict(i)?;
        let target = ds.target(i);
        if pred.shape() != target.shape() {
            return Err(Error::Dimension(format!(
                "forecast {:?} vs target {:?}",
                pred.shape(),
                target.shape()
            )));
        }
        let anchor = ds.anchor(i);
        let pred_o = inverter.invert(&pred, anchor);
        let target_o = inverter.invert(&target, anchor);
        for k in 0..f {
            for j in 0..target.rows() {
                tr[k] += (pred[(j, k)] - target[(j, k)]).abs() / n;
                orig[k] += (pred_o[(j, k)] - target_o[(j, k)]).abs() / n;
            }
        }
    }
    let count = ds.len() as f64;
    Ok(ForecastMetrics {
        mae_transformed: tr.into_iter().map(|x| x / count).collect(),
        mae_original: orig.into_iter().map(|x| x / count).collect(),
    })
}

/// Test-set metrics of a trained model with evaluation-mode graphs.
pub fn evaluate(
    model: &GCRNModel,
    test_set: &WindowedDataset,
    schedule: &GraphSchedule,
    inverter: &ForecastInverter,
    mode: EvalGraphMode,
    seed: u64,
) -> Result<ForecastMetrics> {
    let mut rng = eval_rng(seed);
    let threshold = mode == EvalGraphMode::Threshold;
    forecast_metrics(test_set, inverter, |i| {
        let ops = operators_for(
            schedule,
            test_set.anchor(i),
            &model.dims,
            &mut rng,
            threshold,
        )?;
        model.predict(&SampleInput::from_dataset(test_set, i), &ops)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, SeriesFrame};
    use crate::gcrn::model::ModelDims;
    use crate::graph::EdgeProbMatrix;
    use crate::numerics::grad_check;

    #[test]
    fn loss_examples() {
        let a = Matrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(mae_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(
            mae_loss(&a, &Matrix::from_rows(&[[3.0, 2.0]])).unwrap(),
            1.0
        );
        let p = Matrix::column(&[1.0, 1.0]);
        assert_eq!(mae_loss(&p, &Matrix::column(&[2.0, 4.0])).unwrap(), 4.0);
        assert!(matches!(mae_loss(&p, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn loss_matches_scalar_loop() {
        let mut rng = SeededRng::new(0);
        for _ in 0..20 {
            let n = 1 + rng.index(6);
            let f = 1 + rng.index(6);
            let p = Matrix::from_fn(n, f, |_, _| rng.standard_normal());
            let t = Matrix::from_fn(n, f, |_, _| rng.standard_normal());
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..f {
                    s += (p[(i, k)] - t[(i, k)]).abs();
                }
            }
            assert!((mae_loss(&p, &t).unwrap() - s / f as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Matrix::from_rows(&[[1.0, -1.0]]);
        let mut adam = Adam::new(0.1, &[(1, 2)]);
        adam.step(&mut [&mut p], &[Matrix::from_rows(&[[3.0, -0.5]])]);
        assert!((p[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((p[(0, 1)] + 0.9).abs() < 1e-6);
    }

    fn toy(t: usize, seed: u64) -> SeriesFrame {
        let mut rng = SeededRng::new(seed);
        let mut m = Matrix::zeros(3, t);
        for s in 1..t {
            for i in 0..3 {
                m[(i, s)] = 0.8 * m[((i + 1) % 3, s - 1)] + 0.3 * rng.standard_normal();
            }
        }
        SeriesFrame::new(m, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    fn ring_schedule() -> GraphSchedule {
        let p = Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.7 });
        GraphSchedule::single(EdgeProbMatrix::new(p).unwrap(), (0, 100))
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let frame = toy(20, 1);
        let ds = make_windows(&frame, 3, 2, true).unwrap();
        let dims = ModelDims::for_dataset(&ds, 3);
        let model = GCRNModel::new(dims, &mut SeededRng::new(2)).unwrap();
        let sample = SampleInput::from_dataset(&ds, 0);
        let target = ds.target(0);
        let mut a = Matrix::zeros(3, 3);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        let ops_m = vec![crate::graph::normalize_operator(&a), Matrix::identity(3)];
        let params: Vec<Matrix> = model.blocks().into_iter().cloned().collect();
        let err = grad_check(
            |t, p| {
                let vars = ModelVars {
                    encoder: crate::gcrn::cell::CellVars {
                        r: crate::gcrn::cell::ConvVars { w: p[0], b: p[1] },
                        z: crate::gcrn::cell::ConvVars { w: p[2], b: p[3] },
                        c: crate::gcrn::cell::ConvVars { w: p[4], b: p[5] },
                    },
                    decoder: crate::gcrn::cell::CellVars {
                        r: crate::gcrn::cell::ConvVars { w: p[6], b: p[7] },
                        z: crate::gcrn::cell::ConvVars { w: p[8], b: p[9] },
                        c: crate::gcrn::cell::ConvVars { w: p[10], b: p[11] },
                    },
                    out_w: p[12],
                    out_b: p[13],
                };
                let ops: Vec<_> = ops_m.iter().map(|o| t.constant(o.clone())).collect();
                let pred = vars.unroll(t, &ops, &sample);
                let tv = t.constant(target.clone());
                let d = t.sub(pred, tv);
                let l = t.l1(d);
                t.scale(l, 0.5)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 4,
            batch_size: 8,
            seed,
            record_timing: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let frame = toy(120, 3);
        let ds = make_windows(&frame, 4, 2, false).unwrap();
        let (tr, va, _) =
            crate::data::chronological_split(&ds, &crate::data::SplitSpec::default()).unwrap();
        let dims = ModelDims::for_dataset(&ds, 4);
        let run = || {
            let m = GCRNModel::new(dims, &mut SeededRng::new(4)).unwrap();
            train(m, &tr, &va, &ring_schedule(), &quick_config(5)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        let h = &a.history.epochs;
        assert!(h.last().unwrap().train_mae < h[0].train_mae);
        assert_eq!(a.history.to_csv(), b.history.to_csv());
    }

    #[test]
    fn zero_patience_stops_at_first_non_improvement() {
        let frame = toy(120, 6);
        let ds = make_windows(&frame, 4, 2, false).unwrap();
        let (tr, va, _) =
            crate::data::chronological_split(&ds, &crate::data::SplitSpec::default()).unwrap();
        let dims = ModelDims::for_dataset(&ds, 4);
        let m = GCRNModel::new(dims, &mut SeededRng::new(7)).unwrap();
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 60,
            learning_rate: 0.05,
            ..quick_config(8)
        };
        let out = train(m, &tr, &va, &ring_schedule(), &cfg).unwrap();
        let h = &out.history.epochs;
        let first_bad = (1..h.len())
            .find(|&k| {
                h[k].val_mae
                    >= h[..k]
                        .iter()
                        .map(|e| e.val_mae)
                        .fold(f64::INFINITY, f64::min)
            })
            .expect("a non-improving epoch");
        assert_eq!(h.len(), first_bad + 1);
    }

    #[test]
    fn best_checkpoint_is_returned() {
        let frame = toy(120, 9);
        let ds = make_windows(&frame, 4, 2, false).unwrap();
        let (tr, va, _) =
            crate::data::chronological_split(&ds, &crate::data::SplitSpec::default()).unwrap();
        let dims = ModelDims::for_dataset(&ds, 4);
        let m = GCRNModel::new(dims, &mut SeededRng::new(10)).unwrap();
        let cfg = quick_config(11);
        let out = train(m, &tr, &va, &ring_schedule(), &cfg).unwrap();
        let v = dataset_loss(
            &out.model,
            &va,
            &ring_schedule(),
            cfg.eval_graph_mode,
            cfg.seed,
        )
        .unwrap();
        assert_eq!(v, out.history.best_val());
    }

    #[test]
    fn divergence_is_reported() {
        let frame = toy(60, 12);
        let ds = make_windows(&frame, 3, 1, false).unwrap();
        let (tr, va, _) =
            crate::data::chronological_split(&ds, &crate::data::SplitSpec::default()).unwrap();
        let mut m =
            GCRNModel::new(ModelDims::for_dataset(&ds, 2), &mut SeededRng::new(13)).unwrap();
        m.out_b = Matrix::filled(1, 1, f64::NAN);
        assert!(matches!(
            train(m, &tr, &va, &ring_schedule(), &quick_config(14)),
            Err(Error::Training { epoch: 1, .. })
        ));
    }

    #[test]
    fn zero_predictor_on_white_noise() {
        let mut rng = SeededRng::new(15);
        let values = Matrix::from_fn(2, 10_000, |_, _| rng.standard_normal());
        let frame = SeriesFrame::new(values, vec!["a".into(), "b".into()]).unwrap();
        let z = crate::data::apply_transform(&frame, crate::data::TransformKind::ZScore, 0..10_000)
            .unwrap();
        let ds = make_windows(&z, 1, 1, false).unwrap();
        let inv = ForecastInverter::new(&z);
        let metrics =
            forecast_metrics(&ds, &inv, |i| Ok(Matrix::zeros(2, ds.target(i).cols()))).unwrap();
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!((metrics.at_transformed(1).unwrap() - expected).abs() <= 0.02);
        assert!(matches!(metrics.at(2), Err(Error::Argument(_))));
    }

    #[test]
    fn perfect_forecast_scores_zero() {
        let frame = toy(40, 16);
        let ds = make_windows(&frame, 3, 2, false).unwrap();
        let inv = ForecastInverter::new(&frame);
        let m = forecast_metrics(&ds, &inv, |i| Ok(ds.target(i))).unwrap();
        assert_eq!(m.average_original(), 0.0);
        assert_eq!(m.average_transformed(), 0.0);
    }
}
