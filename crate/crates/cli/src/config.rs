//! `key = value` run configuration.

use crate::CliError;
use gitnet_core::{Activation, LossKind, Variant};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Advection,
    Poisson,
    Linear,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Advection => "advection",
            Problem::Poisson => "poisson",
            Problem::Linear => "linear",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "advection" => Some(Problem::Advection),
            "poisson" => Some(Problem::Poisson),
            "linear" => Some(Problem::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,

    /// Advection mesh size.
    pub mesh: usize,
    pub nx: usize,
    pub ny: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub rank: usize,
    pub noise: f64,

    pub channels: usize,
    pub modes: usize,
    pub layers: usize,
    pub variant: Variant,
    pub activation: Activation,

    pub energy_threshold: f64,
    pub p_cap: usize,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossKind,
    pub decay: f64,
    pub decay_every: usize,

    pub pcanet_width: usize,
    pub pcanet_layers: usize,
    pub pcanet_activation: Activation,

    pub out_dir: PathBuf,
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

pub const REQUIRED_KEYS: [&str; 4] = ["problem", "n_train", "n_test", "seed"];

pub const OPTIONAL_KEYS: [&str; 28] = [
    "mesh",
    "nx",
    "ny",
    "n_in",
    "n_out",
    "rank",
    "noise",
    "C",
    "K",
    "L",
    "variant",
    "activation",
    "energy_threshold",
    "p_cap",
    "epochs",
    "batch_size",
    "lr",
    "loss",
    "decay",
    "decay_every",
    "pcanet_width",
    "pcanet_layers",
    "pcanet_activation",
    "out_dir",
    "train_data",
    "test_data",
    "checkpoint",
    "history",
];

struct Entry {
    line: usize,
    value: String,
}

fn config_err(line: Option<usize>, msg: impl Into<String>) -> CliError {
    CliError::Config { line, msg: msg.into() }
}

impl RunConfig {
    /// Reads a configuration file. Relative paths inside it resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut entries: Vec<(String, Entry)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_err(Some(line), format!("expected `key = value`, got `{content}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !REQUIRED_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
                return Err(config_err(Some(line), format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(config_err(Some(line), format!("missing value for `{key}`")));
            }
            if let Some((_, prev)) = entries.iter().find(|(k, _)| k == key) {
                return Err(config_err(
                    Some(line),
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.push((key.to_string(), Entry { line, value: value.to_string() }));
        }
        for key in REQUIRED_KEYS {
            if !entries.iter().any(|(k, _)| k == key) {
                return Err(config_err(None, format!("missing required key `{key}`")));
            }
        }
        let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, e)| e);

        fn num<T: FromStr>(e: &Entry, key: &str) -> Result<T, CliError> {
            e.value
                .parse()
                .map_err(|_| config_err(Some(e.line), format!("`{key}` expects a number, got `{}`", e.value)))
        }
        let usize_or = |key: &str, default: usize, min: usize| -> Result<usize, CliError> {
            match get(key) {
                None => Ok(default),
                Some(e) => {
                    let v: usize = num(e, key)?;
                    if v < min {
                        return Err(config_err(Some(e.line), format!("`{key}` must be at least {min}, got {v}")));
                    }
                    Ok(v)
                }
            }
        };
        let f64_or = |key: &str, default: f64, ok: &dyn Fn(f64) -> bool, what: &str| -> Result<f64, CliError> {
            match get(key) {
                None => Ok(default),
                Some(e) => {
                    let v: f64 = num(e, key)?;
                    if !v.is_finite() || !ok(v) {
                        return Err(config_err(Some(e.line), format!("`{key}` must be {what}, got {v}")));
                    }
                    Ok(v)
                }
            }
        };
        let choice = |key: &str| get(key).map(|e| (e.line, e.value.as_str()));
        let activation = |key: &str, default: Activation| -> Result<Activation, CliError> {
            match choice(key) {
                None => Ok(default),
                Some((line, v)) => Activation::parse(v).ok_or_else(|| {
                    config_err(Some(line), format!("`{key}` must be gelu, relu or identity, got `{v}`"))
                }),
            }
        };
        let path = |key: &str, default: PathBuf| -> PathBuf {
            match get(key) {
                None => default,
                Some(e) => base.join(&e.value),
            }
        };

        let problem_entry = get("problem").expect("checked above");
        let problem = Problem::parse(&problem_entry.value).ok_or_else(|| {
            config_err(
                Some(problem_entry.line),
                format!("`problem` must be advection, poisson or linear, got `{}`", problem_entry.value),
            )
        })?;
        let variant = match choice("variant") {
            None => Variant::Standard,
            Some((line, v)) => Variant::parse(v).ok_or_else(|| {
                config_err(Some(line), format!("`variant` must be standard or pre_residual, got `{v}`"))
            })?,
        };
        let loss = match choice("loss") {
            None => LossKind::AbsoluteMse,
            Some((line, v)) => LossKind::parse(v).ok_or_else(|| {
                config_err(Some(line), format!("`loss` must be absolute_mse or relative, got `{v}`"))
            })?,
        };

        let out_dir = path("out_dir", base.to_path_buf());
        let cfg = RunConfig {
            problem,
            n_train: usize_or("n_train", 0, 2)?,
            n_test: usize_or("n_test", 0, 0)?,
            seed: num(get("seed").expect("checked above"), "seed")?,
            mesh: usize_or("mesh", 128, 2)?,
            nx: usize_or("nx", 33, 3)?,
            ny: usize_or("ny", 33, 3)?,
            n_in: usize_or("n_in", 64, 1)?,
            n_out: usize_or("n_out", 64, 1)?,
            rank: usize_or("rank", 8, 1)?,
            noise: f64_or("noise", 0.0, &|v| v >= 0.0, "non-negative")?,
            channels: usize_or("C", 8, 1)?,
            modes: usize_or("K", 64, 1)?,
            layers: usize_or("L", 3, 1)?,
            variant,
            activation: activation("activation", Activation::Gelu)?,
            energy_threshold: f64_or("energy_threshold", 0.99999, &|v| v > 0.0 && v <= 1.0, "in (0, 1]")?,
            p_cap: usize_or("p_cap", 200, 1)?,
            epochs: usize_or("epochs", 100, 1)?,
            batch_size: usize_or("batch_size", 64, 1)?,
            lr: f64_or("lr", 1e-3, &|v| v >= 0.0, "non-negative")?,
            loss,
            decay: f64_or("decay", 0.5, &|v| v > 0.0 && v <= 1.0, "in (0, 1]")?,
            decay_every: usize_or("decay_every", 0, 0)?,
            pcanet_width: usize_or("pcanet_width", 128, 1)?,
            pcanet_layers: usize_or("pcanet_layers", 4, 1)?,
            pcanet_activation: activation("pcanet_activation", Activation::Relu)?,
            train_data: path("train_data", out_dir.join("train.opds")),
            test_data: path("test_data", out_dir.join("test.opds")),
            checkpoint: path("checkpoint", out_dir.join("model.gitn")),
            history: path("history", out_dir.join("history.csv")),
            out_dir,
        };
        cfg.check_problem(&|key| get(key).map(|e| e.line))?;
        Ok(cfg)
    }

    fn check_problem(&self, line_of: &dyn Fn(&str) -> Option<usize>) -> Result<(), CliError> {
        match self.problem {
            Problem::Advection if !self.mesh.is_multiple_of(2) => Err(config_err(
                line_of("mesh"),
                format!("`mesh` must be even, got {}", self.mesh),
            )),
            Problem::Linear if self.rank > self.n_in.min(self.n_out) => Err(config_err(
                line_of("rank"),
                format!("`rank` must not exceed min(n_in, n_out) = {}", self.n_in.min(self.n_out)),
            )),
            _ => Ok(()),
        }
    }

    pub fn train_config(&self) -> gitnet_core::TrainConfig {
        gitnet_core::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: gitnet_core::rng::splitmix64(self.seed ^ SHUFFLE_STREAM),
            loss: self.loss,
            decay: self.decay,
            decay_every: self.decay_every,
            ..gitnet_core::TrainConfig::default()
        }
    }

    pub fn init_seed(&self) -> u64 {
        gitnet_core::rng::splitmix64(self.seed ^ INIT_STREAM)
    }

    pub fn pca_options(&self) -> gitnet_core::PcaOptions {
        gitnet_core::PcaOptions {
            energy_threshold: self.energy_threshold,
            p_cap: self.p_cap,
            seed: self.seed,
            ..gitnet_core::PcaOptions::default()
        }
    }
}

const INIT_STREAM: u64 = 0x696e_6974;
const SHUFFLE_STREAM: u64 = 0x7368_7566;
