//! Run configuration: one JSON document, then `--set key=value` overrides,
//! then explicit flags. Every flag names a config key.

use std::path::{Path, PathBuf};

use culture_bridge::dlirl::TrainingConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Train and evaluate on the target culture's own data.
    #[default]
    Localized,
    /// Deploy a source archetype with its culture vector unchanged.
    Direct,
    /// Deploy a source archetype after recalibrating w on target data.
    CrossCultural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Canonical,
    Highd,
    Ngsim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset the command consumes (target data for calibration).
    pub data: Option<PathBuf>,
    /// Model file (source archetype for calibration and deployment).
    pub model: Option<PathBuf>,
    /// Candidate dataset for `evaluate`; when absent the model is rolled out.
    pub candidate: Option<PathBuf>,
    /// Culture spec JSON for `synth`; a preset is used when absent.
    pub culture: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: None,
            model: None,
            candidate: None,
            culture: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    /// `culture_a` or `culture_b`, used when `paths.culture` is unset.
    pub preset: String,
    pub map_seed: u64,
    pub n_tracks: usize,
    pub duration: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            preset: "culture_a".into(),
            map_seed: 7,
            n_tracks: 52,
            duration: 78.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub format: InputFormat,
    /// Also write the 50-column window dump.
    pub dump_samples: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSettings {
    pub gpi: bool,
    pub teacher_forced: bool,
    /// Vehicles to roll out; empty means every ego track.
    pub vehicles: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub plots: bool,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self { plots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into `training.seed` and used for every sampled
    /// subset.
    pub seed: u64,
    pub mode: Mode,
    /// Share of the input used by `ingest` (tracks), `train` and
    /// `calibrate` (windows).
    pub fraction: f64,
    /// Worker threads; all cores when unset.
    pub jobs: Option<usize>,
    pub paths: Paths,
    pub training: TrainingConfig,
    pub synth: SynthSettings,
    pub ingest: IngestSettings,
    pub rollout: RolloutSettings,
    pub evaluate: EvaluateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Localized,
            fraction: 1.0,
            jobs: None,
            paths: Paths::default(),
            training: TrainingConfig::default(),
            synth: SynthSettings::default(),
            ingest: IngestSettings::default(),
            rollout: RolloutSettings::default(),
            evaluate: EvaluateSettings::default(),
        }
    }
}

/// Explicit command-line values; each one overrides its config key.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub fraction: Option<f64>,
    pub mode: Option<Mode>,
    pub gpi: bool,
    pub teacher_forced: bool,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    pub culture: Option<PathBuf>,
    pub format: Option<InputFormat>,
}

/// Parses `key.path=value`; the value is read as JSON when it parses and as
/// a plain string otherwise.
fn parse_assignment(raw: &str) -> Result<(Vec<String>, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set `{raw}`: expected key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("--set `{raw}`: empty key segment")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.split('.').map(String::from).collect(), value))
}

fn assign(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = root;
    for (i, segment) in path.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "--set {}: `{}` is not an object",
                path.join("."),
                path[..i].join(".")
            ))
        })?;
        if i + 1 == path.len() {
            map.insert(segment.clone(), value);
            return Ok(());
        }
        node = map
            .entry(segment.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("flag values serialize")
}

fn set(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let path: Vec<String> = key.split('.').map(String::from).collect();
    assign(root, &path, value)
}

impl RunConfig {
    /// Defaults, then the config file, then `sets`, then `flags`.
    pub fn load(file: Option<&Path>, sets: &[String], flags: &FlagOverrides) -> Result<Self> {
        let mut root = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        if !root.is_object() {
            return Err(CliError::Config("config root must be a JSON object".into()));
        }
        for raw in sets {
            let (path, value) = parse_assignment(raw)?;
            assign(&mut root, &path, value)?;
        }
        if let Some(v) = flags.seed {
            set(&mut root, "seed", json(&v))?;
        }
        if let Some(v) = &flags.output {
            set(&mut root, "paths.output", json(v))?;
        }
        if let Some(v) = flags.jobs {
            set(&mut root, "jobs", json(&v))?;
        }
        if let Some(v) = flags.fraction {
            set(&mut root, "fraction", json(&v))?;
        }
        if let Some(v) = &flags.mode {
            set(&mut root, "mode", json(v))?;
        }
        if flags.gpi {
            set(&mut root, "rollout.gpi", Value::Bool(true))?;
        }
        if flags.teacher_forced {
            set(&mut root, "rollout.teacher_forced", Value::Bool(true))?;
        }
        for (key, v) in [
            ("paths.data", &flags.data),
            ("paths.model", &flags.model),
            ("paths.candidate", &flags.candidate),
            ("paths.culture", &flags.culture),
        ] {
            if let Some(v) = v {
                set(&mut root, key, json(v))?;
            }
        }
        if let Some(v) = &flags.format {
            set(&mut root, "ingest.format", json(v))?;
        }

        let mut cfg: RunConfig = serde_path_to_error::deserialize(root)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.training.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that hold for every command.
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(CliError::Config(format!("fraction: {} outside (0, 1]", self.fraction)));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs: must be at least 1".into()));
        }
        self.training.validate()?;
        if self.mode == Mode::CrossCultural && (self.paths.model.is_none() || self.paths.data.is_none()) {
            return Err(CliError::Config(
                "mode cross-cultural needs both paths.model (source archetype) and paths.data (target data)".into(),
            ));
        }
        Ok(())
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.paths
            .data
            .as_deref()
            .ok_or_else(|| CliError::Config("paths.data is required".into()))
    }

    pub fn require_model(&self) -> Result<&Path> {
        self.paths
            .model
            .as_deref()
            .ok_or_else(|| CliError::Config("paths.model is required".into()))
    }
}
