//! Layered run configuration: built-in defaults, then an optional config
//! file, then command-line flags.
//!
//! The file is line-oriented `key = value` text. Keys outside the top level
//! carry a section prefix (`train.epochs = 50`). Blank lines and lines
//! starting with `#` are ignored; unknown keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ppn_core::data::SynthConfig;
use ppn_core::eval::{CalibrationConfig, CalibrationMode};
use ppn_core::training::TrainConfig;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Zsl,
    Gzsl,
}

impl FromStr for EvalMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "zsl" => Ok(EvalMode::Zsl),
            "gzsl" => Ok(EvalMode::Gzsl),
            other => Err(ConfigError(format!("unknown eval mode `{other}` (expected zsl or gzsl)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub restarts: usize,
    pub mode: EvalMode,
    pub calibration: CalibrationConfig,
    pub grid: Option<Vec<f64>>,
    pub bundle: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Keys set by the file or by flags, for diagnostics.
    pub explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            restarts: 1,
            mode: EvalMode::Gzsl,
            calibration: CalibrationConfig::default(),
            grid: None,
            bundle: None,
            checkpoint: None,
            out: None,
            explicit: BTreeSet::new(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "threads",
    "synth.seen_classes",
    "synth.unseen_classes",
    "synth.attributes",
    "synth.embed_dim",
    "synth.regions",
    "synth.feature_dim",
    "synth.examples_per_class",
    "synth.noise",
    "synth.support_size",
    "synth.max_parts_per_region",
    "synth.test_fraction",
    "synth.val_fraction",
    "train.lambda1",
    "train.lambda2",
    "train.learning_rate",
    "train.batch_size",
    "train.epochs",
    "train.early_stop",
    "train.patience",
    "train.attribute_norm",
    "train.restarts",
    "eval.mode",
    "eval.calibration",
    "eval.z",
    "eval.gamma",
    "eval.grid",
    "paths.bundle",
    "paths.checkpoint",
    "paths.out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("invalid value `{value}` for `{key}`")))
}

fn parse_core<T: FromStr<Err = ppn_core::Error>>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|e: ppn_core::Error| ConfigError(format!("`{key}`: {e}")))
}

pub fn parse_grid(value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|s| parse::<f64>("grid", s.trim()))
        .collect()
}

impl RunConfig {
    /// Sets one key. Used for both file lines and flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let s = &mut self.synth;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = Some(parse(key, v)?),
            "synth.seen_classes" => s.seen_classes = parse(key, v)?,
            "synth.unseen_classes" => s.unseen_classes = parse(key, v)?,
            "synth.attributes" => s.attributes = parse(key, v)?,
            "synth.embed_dim" => s.embed_dim = parse(key, v)?,
            "synth.regions" => s.regions = parse(key, v)?,
            "synth.feature_dim" => s.feature_dim = parse(key, v)?,
            "synth.examples_per_class" => s.examples_per_class = parse(key, v)?,
            "synth.noise" => s.noise = parse(key, v)?,
            "synth.support_size" => s.support_size = parse(key, v)?,
            "synth.max_parts_per_region" => s.max_parts_per_region = parse(key, v)?,
            "synth.test_fraction" => s.test_fraction = parse(key, v)?,
            "synth.val_fraction" => s.val_fraction = parse(key, v)?,
            "train.lambda1" => t.lambda1 = parse(key, v)?,
            "train.lambda2" => t.lambda2 = parse(key, v)?,
            "train.learning_rate" => t.learning_rate = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.early_stop" => t.early_stop = parse_core(key, v)?,
            "train.patience" => t.patience = parse(key, v)?,
            "train.attribute_norm" => t.attribute_norm = parse_core(key, v)?,
            "train.restarts" => self.restarts = parse(key, v)?,
            "eval.mode" => self.mode = v.parse()?,
            "eval.calibration" => self.calibration.mode = parse_core::<CalibrationMode>(key, v)?,
            "eval.z" => self.calibration.z = parse(key, v)?,
            "eval.gamma" => self.calibration.gamma = parse(key, v)?,
            "eval.grid" => self.grid = Some(parse_grid(v)?),
            "paths.bundle" => self.bundle = Some(PathBuf::from(v)),
            "paths.checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "paths.out" => self.out = Some(PathBuf::from(v)),
            other => {
                return Err(ConfigError(format!(
                    "unknown config key `{other}` (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| ConfigError(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Cross-field checks run before any work.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let cfg_err = |e: ppn_core::Error| ConfigError(e.to_string());
        self.train.validate().map_err(cfg_err)?;
        self.calibration.validate().map_err(cfg_err)?;
        if self.restarts == 0 {
            return Err(ConfigError("train.restarts must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn calibration_explicit(&self) -> bool {
        ["eval.calibration", "eval.z", "eval.gamma", "eval.grid"]
            .iter()
            .any(|k| self.explicit.contains(*k))
    }
}
