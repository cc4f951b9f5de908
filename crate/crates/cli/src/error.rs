use std::path::{Path, PathBuf};

use culture_bridge::dlirl::DlirlError;
use culture_bridge::featurize::FeaturizeError;
use culture_bridge::metrics::MetricsError;
use culture_bridge::rollout::RolloutError;
use culture_bridge::synth::SynthError;
use culture_bridge::trajectory::TrajectoryError;
use thiserror::Error;

/// Failure classes with disjoint process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric divergence: {0}")]
    Numeric(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn output(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Output {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<DlirlError> for CliError {
    fn from(e: DlirlError) -> Self {
        match e {
            DlirlError::NonFiniteLoss { .. } | DlirlError::NonFiniteActivation => CliError::Numeric(e.to_string()),
            DlirlError::InvalidConfig { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec { .. } | SynthError::TooSmall { .. } => CliError::Config(e.to_string()),
            SynthError::DegenerateWorld => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::FractionOutOfRange { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeaturizeError> for CliError {
    fn from(e: FeaturizeError) -> Self {
        match e {
            FeaturizeError::FractionOutOfRange { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RolloutError> for CliError {
    fn from(e: RolloutError) -> Self {
        CliError::Data(e.to_string())
    }
}
