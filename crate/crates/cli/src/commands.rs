//! The five subcommands. Each reads and writes artifacts under the run
//! directory, so the stages can run as separate processes.

use std::path::PathBuf;

use glgcrn_core::baselines::{ha_forecast, var_fit, var_forecast};
use glgcrn_core::data::{
    apply_transform, chronological_split, generate_synthetic, load_csv, make_windows, CsvOptions,
    ForecastInverter, GroundTruth, SeriesFrame, WindowedDataset,
};
use glgcrn_core::gcrn::{
    evaluate, forecast_metrics, read_checkpoint, train, write_checkpoint, ForecastMetrics,
    GCRNModel, ModelDims,
};
use glgcrn_core::glasso::{empirical_cov, solve_static};
use glgcrn_core::graph::{edge_probs, threshold_adjacency, EdgeProbMatrix, GraphSchedule};
use glgcrn_core::numerics::SeededRng;
use glgcrn_core::persist::{format_f64, read_text, write_matrix_csv, write_text, Metadata};
use glgcrn_core::tvgl::{segment_covariances, solve_tvgl, Segmentation};
use glgcrn_core::Matrix;
use log::{info, warn};

use crate::config::{ExperimentConfig, GraphMode};
use crate::error::{CliError, CliResult};

/// Header of `report.csv`.
pub const REPORT_HEADER: &str = "metric,method,scale,horizon,value";

pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            root: cfg.run_dir(),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn series(&self) -> PathBuf {
        self.root.join("data").join("series.csv")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.root.join("graph")
    }

    pub fn schedule_dir(&self) -> PathBuf {
        self.graph_dir().join("schedule")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.model_dir().join("checkpoint.bin")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
}

fn prepare_run(cfg: &ExperimentConfig) -> CliResult<RunPaths> {
    let paths = RunPaths::new(cfg);
    write_text(&paths.config(), &cfg.to_text())?;
    Ok(paths)
}

/// Generates a synthetic dataset plus its ground truth.
pub fn cmd_synth(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let paths = prepare_run(cfg)?;
    let spec = cfg.synthetic_spec();
    let data = generate_synthetic(&spec)?;
    data.frame.save(&paths.series())?;
    let truth_dir = paths.data_dir().join("truth");
    let mut manifest = Metadata::new();
    manifest
        .set("kind", spec.kind)
        .set("n", spec.n)
        .set("t", spec.t)
        .set_f64("density", spec.edge_density)
        .set_f64("snr", spec.snr)
        .set("seed", spec.seed)
        .set("series", "series.csv");
    match &data.truth {
        GroundTruth::Precision(theta) => {
            write_matrix_csv(&truth_dir.join("theta.csv"), theta)?;
            manifest.set("truth", "truth/theta.csv");
        }
        GroundTruth::PrecisionPath { thetas, bounds } => {
            let mut files = Vec::new();
            for (k, (theta, (start, end))) in thetas.iter().zip(bounds).enumerate() {
                let name = format!("theta_{k:03}.csv");
                write_matrix_csv(&truth_dir.join(&name), theta)?;
                manifest.set(format!("regime.{k}"), format!("{start}..{end}"));
                files.push(format!("truth/{name}"));
            }
            manifest
                .set("regimes", thetas.len())
                .set("truth", files.join(","));
        }
        GroundTruth::VarCoefficients(c) => {
            write_matrix_csv(&truth_dir.join("var_c.csv"), c)?;
            manifest
                .set_f64("var_radius", spec.var_radius)
                .set("truth", "truth/var_c.csv");
        }
    }
    manifest.write(&paths.data_dir().join("synth.meta"))?;
    info!("wrote {} series x {} steps", spec.n, spec.t);
    Ok(paths.root)
}

/// The raw frame named by the config, or the synthetic one in the run.
pub fn load_frame(cfg: &ExperimentConfig, paths: &RunPaths) -> CliResult<SeriesFrame> {
    match &cfg.data_path {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "data file {} does not exist",
                    path.display()
                )));
            }
            Ok(load_csv(
                path,
                &CsvOptions {
                    has_header: cfg.has_header,
                    timestamp_column: cfg.timestamp_column,
                },
            )?)
        }
        None => {
            let path = paths.series();
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "no data: set data.path or run `synth` first (looked for {})",
                    path.display()
                )));
            }
            Ok(SeriesFrame::load(&path)?)
        }
    }
}

/// Transformed frame, windows and the three splits.
pub struct Prepared {
    pub frame: SeriesFrame,
    pub fit_end: usize,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

pub fn prepare(cfg: &ExperimentConfig, paths: &RunPaths) -> CliResult<Prepared> {
    let raw = load_frame(cfg, paths)?;
    let fit = cfg.split.fit_range(raw.n_steps());
    let mut frame = raw;
    for &kind in &cfg.transforms {
        frame = apply_transform(&frame, kind, fit.clone())?;
    }
    let windows = make_windows(&frame, cfg.history, cfg.horizon, cfg.temporal_features)?;
    let (train, val, test) = chronological_split(&windows, &cfg.split)?;
    Ok(Prepared {
        frame,
        fit_end: fit.end,
        train,
        val,
        test,
    })
}

fn centered(block: &Matrix) -> Matrix {
    let t = block.cols() as f64;
    let means: Vec<f64> = (0..block.rows())
        .map(|i| block.row(i).iter().sum::<f64>() / t)
        .collect();
    Matrix::from_fn(block.rows(), block.cols(), |i, j| block[(i, j)] - means[i])
}

fn threshold_density(schedule: &GraphSchedule) -> f64 {
    let entries = schedule.entries();
    entries
        .iter()
        .map(|e| threshold_adjacency(&e.probs).density())
        .sum::<f64>()
        / entries.len() as f64
}

fn support_density(schedule: &GraphSchedule) -> f64 {
    let entries = schedule.entries();
    entries
        .iter()
        .map(|e| e.probs.support_density())
        .sum::<f64>()
        / entries.len() as f64
}

/// Graph estimation on the training range.
///
/// Writes the precision estimate(s), the edge-probability schedule and
/// `graph/diagnostics.meta`. A solver that hits its iteration cap still
/// writes everything and then reports [`CliError::NotConverged`].
pub fn cmd_fit_graph(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let paths = prepare_run(cfg)?;
    let prepared = prepare(cfg, &paths)?;
    let n = prepared.frame.n_series();
    let block = centered(&prepared.frame.values.col_slice(0, prepared.fit_end));
    let graph_dir = paths.graph_dir();
    let mut diag = Metadata::new();
    diag.set("mode", cfg.graph_mode).set("n", n);
    let mut converged = true;
    let schedule = match cfg.graph_mode {
        GraphMode::Static => {
            let s = empirical_cov(&block)?;
            let est = solve_static(&s.s, cfg.lambda, &cfg.solver)?;
            est.save(&graph_dir.join("theta.csv"))?;
            converged = est.converged;
            diag.set_f64("lambda", cfg.lambda)
                .set("iterations", est.iterations)
                .set("converged", est.converged)
                .set_f64("objective", est.objective());
            GraphSchedule::single(
                edge_probs(&est.theta, cfg.edge_prob)?,
                (0, prepared.fit_end),
            )
        }
        GraphMode::Tvgl => {
            let covs = segment_covariances(&block, Segmentation::Count(cfg.intervals), 2)?;
            let path = solve_tvgl(&covs, cfg.lambda, cfg.beta, &cfg.solver)?;
            path.save(&graph_dir.join("path"))?;
            converged = path.converged;
            diag.set_f64("lambda", cfg.lambda)
                .set_f64("beta", cfg.beta)
                .set("intervals", path.thetas.len())
                .set("iterations", path.iterations)
                .set("converged", path.converged)
                .set_f64("objective", path.objective())
                .set_f64("total_variation", path.total_variation());
            GraphSchedule::from_path(&path, cfg.edge_prob)?
        }
        GraphMode::Complete => {
            GraphSchedule::single(EdgeProbMatrix::complete(n), (0, prepared.fit_end))
        }
        GraphMode::File => {
            let file = cfg
                .graph_file
                .as_ref()
                .expect("validated: file mode has a path");
            if !file.exists() {
                return Err(CliError::Usage(format!(
                    "graph file {} does not exist",
                    file.display()
                )));
            }
            let p = EdgeProbMatrix::load(file)?;
            if p.n() != n {
                return Err(CliError::Usage(format!(
                    "graph file {} has {} nodes, data has {n}",
                    file.display(),
                    p.n()
                )));
            }
            GraphSchedule::single(p, (0, prepared.fit_end))
        }
    };
    schedule.save(&paths.schedule_dir())?;
    diag.set("entries", schedule.entries().len())
        .set_f64("expected_density", schedule.mean_density())
        .set_f64("support_density", support_density(&schedule))
        .set_f64("threshold_density", threshold_density(&schedule));
    diag.write(&graph_dir.join("diagnostics.meta"))?;
    if !converged {
        return Err(CliError::NotConverged(format!(
            "graph solver hit graph.max_iter = {} without converging; diagnostics in {}",
            cfg.solver.max_iter,
            graph_dir.display()
        )));
    }
    Ok(paths.root)
}

/// The schedule from `fit-graph`, or a complete graph in complete mode.
fn load_schedule(
    cfg: &ExperimentConfig,
    paths: &RunPaths,
    n: usize,
    fit_end: usize,
) -> CliResult<GraphSchedule> {
    let dir = paths.schedule_dir();
    if dir.join("schedule.meta").exists() {
        return Ok(GraphSchedule::load(&dir)?);
    }
    if cfg.graph_mode == GraphMode::Complete {
        return Ok(GraphSchedule::single(
            EdgeProbMatrix::complete(n),
            (0, fit_end),
        ));
    }
    Err(CliError::Usage(format!(
        "no graph artifacts in {}; run `fit-graph` with this config first",
        dir.display()
    )))
}

/// Trains the forecaster and writes the checkpoint, history and timing.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let paths = prepare_run(cfg)?;
    let prepared = prepare(cfg, &paths)?;
    let schedule = load_schedule(cfg, &paths, prepared.frame.n_series(), prepared.fit_end)?;
    if schedule.n() != prepared.frame.n_series() {
        return Err(CliError::Usage(format!(
            "graph has {} nodes but the data has {} series; rerun `fit-graph`",
            schedule.n(),
            prepared.frame.n_series()
        )));
    }
    let dims = ModelDims::for_dataset(&prepared.train, cfg.hidden);
    let model = GCRNModel::new(dims, &mut SeededRng::new(cfg.seed))?;
    let outcome = train(
        model,
        &prepared.train,
        &prepared.val,
        &schedule,
        &cfg.train_config(),
    )?;
    let model_dir = paths.model_dir();
    write_checkpoint(&paths.checkpoint(), &outcome.model)?;
    outcome.history.save(&model_dir.join("history.csv"))?;
    let mut meta = Metadata::new();
    meta.set("epochs", outcome.history.epochs.len())
        .set("best_epoch", outcome.history.best_epoch)
        .set_f64("best_val_mae", outcome.history.best_val())
        .set_f64("seconds_per_epoch", outcome.history.mean_epoch_seconds())
        .set("graph_mode", schedule.mode())
        .set_f64("expected_density", schedule.mean_density());
    meta.write(&model_dir.join("train.meta"))?;
    info!(
        "trained {} epochs, best validation MAE {:.6} at epoch {}",
        outcome.history.epochs.len(),
        outcome.history.best_val(),
        outcome.history.best_epoch
    );
    Ok(paths.root)
}

fn check_dims(checkpoint: &ModelDims, expected: &ModelDims) -> CliResult<()> {
    let fields = [
        ("n_nodes", checkpoint.n_nodes, expected.n_nodes),
        ("d_in", checkpoint.d_in, expected.d_in),
        ("hidden", checkpoint.hidden, expected.hidden),
        ("history", checkpoint.history, expected.history),
        ("horizon", checkpoint.horizon, expected.horizon),
    ];
    let bad: Vec<String> = fields
        .iter()
        .filter(|(_, a, b)| a != b)
        .map(|(name, a, b)| format!("{name} (checkpoint {a}, config {b})"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "checkpoint does not match the config: {}",
            bad.join(", ")
        )))
    }
}

fn push_mae_rows(rows: &mut Vec<String>, method: &str, m: &ForecastMetrics) {
    for (scale, values) in [
        ("transformed", &m.mae_transformed),
        ("original", &m.mae_original),
    ] {
        for (k, v) in values.iter().enumerate() {
            rows.push(format!("mae,{method},{scale},{},{}", k + 1, format_f64(*v)));
        }
        let avg = values.iter().sum::<f64>() / values.len() as f64;
        rows.push(format!("mae,{method},{scale},avg,{}", format_f64(avg)));
    }
}

/// Scores the trained model and both baselines on the test split and
/// writes `report.csv`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let paths = prepare_run(cfg)?;
    let checkpoint = paths.checkpoint();
    if !checkpoint.exists() {
        return Err(CliError::Usage(format!(
            "no checkpoint at {}; run `train` with this config first",
            checkpoint.display()
        )));
    }
    let model = read_checkpoint(&checkpoint)?;
    let prepared = prepare(cfg, &paths)?;
    check_dims(
        &model.dims,
        &ModelDims::for_dataset(&prepared.test, cfg.hidden),
    )?;
    let schedule = load_schedule(cfg, &paths, prepared.frame.n_series(), prepared.fit_end)?;
    let inverter = ForecastInverter::new(&prepared.frame);
    let test = &prepared.test;
    let horizon = cfg.horizon;

    let model_metrics = evaluate(
        &model,
        test,
        &schedule,
        &inverter,
        cfg.eval_graph_mode(),
        cfg.seed,
    )?;
    let ha = forecast_metrics(test, &inverter, |i| {
        ha_forecast(&test.input_values(i), horizon)
    })?;
    let var = var_fit(
        &prepared.frame.values.col_slice(0, prepared.fit_end),
        cfg.var_lag,
    )
    .and_then(|m| {
        forecast_metrics(test, &inverter, |i| {
            var_forecast(&m, &test.input_values(i), horizon)
        })
    });

    let mut rows = vec![REPORT_HEADER.to_string()];
    push_mae_rows(&mut rows, "model", &model_metrics);
    push_mae_rows(&mut rows, "ha", &ha);
    match var {
        Ok(m) => push_mae_rows(&mut rows, "var", &m),
        Err(e) => warn!("VAR({}) baseline skipped: {e}", cfg.var_lag),
    }
    rows.push(format!(
        "edge_density,graph,expected,all,{}",
        format_f64(schedule.mean_density())
    ));
    rows.push(format!(
        "edge_density,graph,threshold,all,{}",
        format_f64(threshold_density(&schedule))
    ));
    let seconds = Metadata::read(&paths.model_dir().join("train.meta"))
        .and_then(|m| m.parse::<f64>("seconds_per_epoch"))
        .ok();
    match seconds {
        Some(s) => rows.push(format!(
            "seconds_per_epoch,model,wall,all,{}",
            format_f64(s)
        )),
        None => warn!("train.meta missing; seconds_per_epoch not reported"),
    }
    let mut text = rows.join("\n");
    text.push('\n');
    write_text(&paths.report(), &text)?;
    Ok(paths.root)
}

/// Returns the report as an aligned table.
pub fn cmd_report(cfg: &ExperimentConfig) -> CliResult<String> {
    let paths = RunPaths::new(cfg);
    let path = paths.report();
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "no report at {}; run `evaluate` with this config first",
            path.display()
        )));
    }
    Ok(format_table(&read_text(&path)?))
}

fn format_table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<width$}", width = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
