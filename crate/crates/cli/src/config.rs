//! Experiment configuration: flat `section.key = value` text.
//!
//! Every key has a default, so an empty file is a valid config. Unknown or
//! repeated keys are rejected. [`ExperimentConfig::to_text`] writes every
//! key in a fixed order, and parsing that text gives the same config back.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use glgcrn_core::data::{SplitSpec, SyntheticKind, SyntheticSpec, TransformKind};
use glgcrn_core::gcrn::{EvalGraphMode, TrainConfig};
use glgcrn_core::glasso::SolverOptions;
use glgcrn_core::graph::EdgeProbMode;
use glgcrn_core::persist::format_f64;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Prefix of environment variables that override config keys:
/// `GLGCRN_TRAIN__LEARNING_RATE=0.01` sets `train.learning_rate`.
pub const ENV_PREFIX: &str = "GLGCRN_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// One GraphLASSO estimate over the training range.
    Static,
    /// A time-varying path over equal training intervals.
    Tvgl,
    /// `P = 1` off the diagonal.
    Complete,
    /// Edge probabilities read from `graph.file`.
    File,
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphMode::Static => "static",
            GraphMode::Tvgl => "tvgl",
            GraphMode::Complete => "complete",
            GraphMode::File => "file",
        })
    }
}

impl FromStr for GraphMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "static" => Ok(GraphMode::Static),
            "tvgl" => Ok(GraphMode::Tvgl),
            "complete" => Ok(GraphMode::Complete),
            "file" => Ok(GraphMode::File),
            other => Err(CliError::Usage(format!(
                "unknown graph mode `{other}` (expected static, tvgl, complete or file)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub kind: SyntheticKind,
    pub n: usize,
    pub t: usize,
    pub density: f64,
    pub snr: f64,
    pub regimes: usize,
    pub var_radius: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Var1,
            n: 8,
            t: 3000,
            density: 0.3,
            snr: 1.0,
            regimes: 2,
            var_radius: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Input CSV; when unset the series written by `synth` is used.
    pub data_path: Option<PathBuf>,
    pub has_header: bool,
    pub timestamp_column: Option<usize>,
    /// Applied in order, each fitted on the training range.
    pub transforms: Vec<TransformKind>,
    pub history: usize,
    pub horizon: usize,
    pub temporal_features: bool,
    pub split: SplitSpec,

    pub graph_mode: GraphMode,
    pub graph_file: Option<PathBuf>,
    pub lambda: f64,
    pub beta: f64,
    pub intervals: usize,
    pub edge_prob: EdgeProbMode,
    pub solver: SolverOptions,

    pub hidden: usize,
    /// `seed` here is ignored; [`ExperimentConfig::train_config`] fills it
    /// from `run.seed`.
    pub train: TrainConfig,

    pub var_lag: usize,

    pub synth: SynthSettings,

    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            has_header: true,
            timestamp_column: Some(0),
            transforms: vec![TransformKind::ZScore],
            history: 14,
            horizon: 7,
            temporal_features: true,
            split: SplitSpec::default(),
            graph_mode: GraphMode::Static,
            graph_file: None,
            lambda: 0.1,
            beta: 0.05,
            intervals: glgcrn_core::tvgl::DEFAULT_INTERVALS,
            edge_prob: EdgeProbMode::default(),
            solver: SolverOptions::default(),
            hidden: 32,
            train: TrainConfig::default(),
            var_lag: 1,
            synth: SynthSettings::default(),
            seed: 0,
            out: PathBuf::from("runs"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse {raw:?}")))
}

fn parse_f64(key: &str, raw: &str) -> CliResult<f64> {
    let v: f64 = parse_value(key, raw)?;
    if !v.is_finite() {
        return Err(CliError::Usage(format!(
            "config key `{key}` must be finite, got {raw}"
        )));
    }
    Ok(v)
}

fn parse_bool(key: &str, raw: &str) -> CliResult<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "config key `{key}` must be true or false, got {raw:?}"
        ))),
    }
}

fn optional_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key = value, got {line:?}",
                    ln + 1
                ))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Usage(format!("config key `{key}` is set twice")));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, raw: &str) -> CliResult<()> {
        match key {
            "data.path" => self.data_path = optional_path(raw),
            "data.has_header" => self.has_header = parse_bool(key, raw)?,
            "data.timestamp_column" => {
                self.timestamp_column = if raw.is_empty() || raw == "none" {
                    None
                } else {
                    Some(parse_value(key, raw)?)
                }
            }
            "data.transforms" => {
                self.transforms = if raw.is_empty() || raw == "none" {
                    Vec::new()
                } else {
                    raw.split(',')
                        .map(|t| t.trim().parse().map_err(CliError::from))
                        .collect::<CliResult<_>>()?
                }
            }
            "data.history" => self.history = parse_value(key, raw)?,
            "data.horizon" => self.horizon = parse_value(key, raw)?,
            "data.temporal_features" => self.temporal_features = parse_bool(key, raw)?,
            "data.split" => {
                let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(CliError::Usage(format!(
                        "data.split needs three fractions train,val,test, got {raw:?}"
                    )));
                }
                self.split = SplitSpec {
                    train: parse_f64(key, parts[0])?,
                    val: parse_f64(key, parts[1])?,
                    test: parse_f64(key, parts[2])?,
                };
            }
            "graph.mode" => self.graph_mode = raw.parse()?,
            "graph.file" => self.graph_file = optional_path(raw),
            "graph.lambda" => self.lambda = parse_f64(key, raw)?,
            "graph.beta" => self.beta = parse_f64(key, raw)?,
            "graph.intervals" => self.intervals = parse_value(key, raw)?,
            "graph.edge_prob" => self.edge_prob = raw.parse()?,
            "graph.rho" => self.solver.rho = parse_f64(key, raw)?,
            "graph.abs_tol" => self.solver.abs_tol = parse_f64(key, raw)?,
            "graph.rel_tol" => self.solver.rel_tol = parse_f64(key, raw)?,
            "graph.max_iter" => self.solver.max_iter = parse_value(key, raw)?,
            "graph.penalize_diagonal" => self.solver.penalize_diagonal = parse_bool(key, raw)?,
            "train.hidden" => self.hidden = parse_value(key, raw)?,
            "train.learning_rate" => self.train.learning_rate = parse_f64(key, raw)?,
            "train.max_epochs" => self.train.max_epochs = parse_value(key, raw)?,
            "train.patience" => self.train.patience = parse_value(key, raw)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, raw)?,
            "train.eval_graph" => self.train.eval_graph_mode = raw.parse()?,
            "train.record_timing" => self.train.record_timing = parse_bool(key, raw)?,
            "baseline.var_lag" => self.var_lag = parse_value(key, raw)?,
            "synth.kind" => self.synth.kind = raw.parse()?,
            "synth.n" => self.synth.n = parse_value(key, raw)?,
            "synth.t" => self.synth.t = parse_value(key, raw)?,
            "synth.density" => self.synth.density = parse_f64(key, raw)?,
            "synth.snr" => self.synth.snr = parse_f64(key, raw)?,
            "synth.regimes" => self.synth.regimes = parse_value(key, raw)?,
            "synth.var_radius" => self.synth.var_radius = parse_f64(key, raw)?,
            "run.seed" => self.seed = parse_value(key, raw)?,
            "run.out" => {
                if raw.is_empty() {
                    return Err(CliError::Usage("run.out must not be empty".into()));
                }
                self.out = PathBuf::from(raw)
            }
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its text value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let transforms = self
            .transforms
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("data.path", path_text(&self.data_path)),
            ("data.has_header", self.has_header.to_string()),
            (
                "data.timestamp_column",
                self.timestamp_column
                    .map_or("none".into(), |c| c.to_string()),
            ),
            (
                "data.transforms",
                if transforms.is_empty() {
                    "none".into()
                } else {
                    transforms
                },
            ),
            ("data.history", self.history.to_string()),
            ("data.horizon", self.horizon.to_string()),
            ("data.temporal_features", self.temporal_features.to_string()),
            (
                "data.split",
                format!(
                    "{},{},{}",
                    format_f64(self.split.train),
                    format_f64(self.split.val),
                    format_f64(self.split.test)
                ),
            ),
            ("graph.mode", self.graph_mode.to_string()),
            ("graph.file", path_text(&self.graph_file)),
            ("graph.lambda", format_f64(self.lambda)),
            ("graph.beta", format_f64(self.beta)),
            ("graph.intervals", self.intervals.to_string()),
            ("graph.edge_prob", self.edge_prob.to_string()),
            ("graph.rho", format_f64(self.solver.rho)),
            ("graph.abs_tol", format_f64(self.solver.abs_tol)),
            ("graph.rel_tol", format_f64(self.solver.rel_tol)),
            ("graph.max_iter", self.solver.max_iter.to_string()),
            (
                "graph.penalize_diagonal",
                self.solver.penalize_diagonal.to_string(),
            ),
            ("train.hidden", self.hidden.to_string()),
            ("train.learning_rate", format_f64(self.train.learning_rate)),
            ("train.max_epochs", self.train.max_epochs.to_string()),
            ("train.patience", self.train.patience.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.eval_graph", self.train.eval_graph_mode.to_string()),
            ("train.record_timing", self.train.record_timing.to_string()),
            ("baseline.var_lag", self.var_lag.to_string()),
            ("synth.kind", self.synth.kind.to_string()),
            ("synth.n", self.synth.n.to_string()),
            ("synth.t", self.synth.t.to_string()),
            ("synth.density", format_f64(self.synth.density)),
            ("synth.snr", format_f64(self.synth.snr)),
            ("synth.regimes", self.synth.regimes.to_string()),
            ("synth.var_radius", format_f64(self.synth.var_radius)),
            ("run.seed", self.seed.to_string()),
            ("run.out", self.out.display().to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies `GLGCRN_SECTION__KEY` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> CliResult<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.as_ref().strip_prefix(ENV_PREFIX)?;
                let (section, key) = rest.split_once("__")?;
                Some((
                    format!("{}.{}", section.to_lowercase(), key.to_lowercase()),
                    v.as_ref().trim().to_string(),
                ))
            })
            .collect();
        // environment order is unspecified
        overrides.sort();
        for (key, value) in overrides {
            self.set(&key, &value)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        self.split.validate()?;
        if self.history == 0 || self.horizon == 0 {
            return Err(CliError::Usage(
                "data.history and data.horizon must be at least 1".into(),
            ));
        }
        if self.lambda < 0.0 || self.beta < 0.0 {
            return Err(CliError::Usage(
                "graph.lambda and graph.beta must be nonnegative".into(),
            ));
        }
        if self.intervals == 0 {
            return Err(CliError::Usage("graph.intervals must be at least 1".into()));
        }
        if self.graph_mode == GraphMode::File && self.graph_file.is_none() {
            return Err(CliError::Usage("graph.mode = file needs graph.file".into()));
        }
        if self.hidden == 0 {
            return Err(CliError::Usage("train.hidden must be at least 1".into()));
        }
        if self.var_lag == 0 {
            return Err(CliError::Usage(
                "baseline.var_lag must be at least 1".into(),
            ));
        }
        self.solver.validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let mut spec = SyntheticSpec::new(
            self.synth.kind,
            self.synth.n,
            self.synth.t,
            self.synth.density,
            self.seed,
        );
        spec.snr = self.synth.snr;
        spec.regimes = self.synth.regimes;
        spec.var_radius = self.synth.var_radius;
        spec
    }

    /// Hex SHA-256 prefix of every key except the `run.` ones.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.entries() {
            if !k.starts_with("run.") {
                hasher.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `<out>/run-<hash>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out
            .join(format!("run-{}-s{}", self.content_hash(), self.seed))
    }

    pub fn eval_graph_mode(&self) -> EvalGraphMode {
        self.train.eval_graph_mode
    }
}
