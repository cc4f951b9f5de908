//! Evaluation suite: behavior densities and their distances, lane-change
//! frequency, driving-style tertiles, TTC density error and per-case
//! rollout summaries.

mod cases;
mod density;
mod lane_change;
mod report;
mod styles;

pub use cases::{case_report, CaseReport};
pub use density::{
    density_estimate, density_mse, interpolate, silverman_bandwidth, ttc_density_rmse, DensityProfile, Variable,
    GRID_POINTS,
};
pub use lane_change::{has_sustained_lane_change, lane_change_frequency, quartiles, Quartiles, LANE_PERSIST_FRAMES};
pub use report::{
    build_report, ego_subset, write_density_csvs, DensitySeries, EvaluationReport, LaneChangeSummary, ReportMetadata,
};
pub use styles::{classify_styles, StyleCentroid, StyleClass, StyleClassification, StyleEntry};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sample of {0} values has no spread")]
    DegenerateSample(usize),
    #[error("variable mismatch: {0:?} vs {1:?}")]
    VariableMismatch(Variable, Variable),
    #[error("dataset has no tracks")]
    EmptyDataset,
    #[error("need at least 3 tracks, got {0}")]
    InsufficientTracks(usize),
    #[error("population standard deviation of {0} is zero")]
    ZeroVariance(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
