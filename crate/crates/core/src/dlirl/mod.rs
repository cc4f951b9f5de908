//! Successor-feature imitation with a separable culture vector.
//!
//! Each axis regresses acceleration as `Psi(window) . w`. Archetype training
//! fits `Psi` with `w` fixed at all-ones; calibration freezes `Psi` and fits
//! only `w`, which is a linear least-squares problem.

mod adam;
mod calibrate;
mod gpi;
mod network;
mod persist;
mod train;

pub use adam::Adam;
pub use calibrate::{calibrate_culture, closed_form_culture, culture_loss, CalibrationRun, RIDGE_LAMBDA};
pub use gpi::{advance_window, gpi_select_action, ActionGrid, GpiContext};
pub use network::{Block, Branch, Layout, Psi, Trace, INPUT_DIM, KINEMATIC_INPUTS, PSI_DIM};
pub use persist::{load_model, model_from_json, model_to_json, save_model, ModelFile, MODEL_FORMAT_VERSION};
pub use train::{batch_loss_and_grad, train_archetype, EpochLoss, TrainingRun};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{ActionSample, StateWindow};

/// Default acceleration bound on either axis, m/s^2.
pub const ACTION_BOUND: f64 = 5.0;

#[derive(Debug, Error)]
pub enum DlirlError {
    #[error("insufficient data: {have} samples, need at least {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("network produced a non-finite activation")]
    NonFiniteActivation,
    #[error("design matrix has rank {rank} < {dim}; ridge solution returned")]
    RankDeficient {
        rank: usize,
        dim: usize,
        solution: Box<CultureVector>,
    },
    #[error("action grid is empty")]
    EmptyGrid,
    #[error("invalid training config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("model file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DlirlError>;

/// Per-axis preference weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CultureVector {
    pub w_x: Psi,
    pub w_y: Psi,
}

impl CultureVector {
    pub fn ones() -> Self {
        Self {
            w_x: [1.0; PSI_DIM],
            w_y: [1.0; PSI_DIM],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w_x: self.w_x.map(|v| v * c),
            w_y: self.w_y.map(|v| v * c),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w_x.iter().chain(&self.w_y).all(|v| v.is_finite())
    }

    pub fn linf_distance(&self, other: &CultureVector) -> f64 {
        self.w_x
            .iter()
            .chain(&self.w_y)
            .zip(other.w_x.iter().chain(&other.w_y))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for CultureVector {
    fn default() -> Self {
        Self::ones()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub td_weight: f64,
    pub gpi_enabled: bool,
    pub action_bound: f64,
    pub learning_rate: f64,
    pub hidden: usize,
    pub fusion: usize,
    pub calibration_learning_rate: f64,
    pub calibration_max_steps: usize,
    pub calibration_tolerance: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            batch_size: 128,
            epochs: 40,
            seed: 0,
            td_weight: 0.0,
            gpi_enabled: false,
            action_bound: ACTION_BOUND,
            learning_rate: 1e-3,
            hidden: 32,
            fusion: PSI_DIM,
            calibration_learning_rate: 0.01,
            calibration_max_steps: 5000,
            calibration_tolerance: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(DlirlError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if !(self.td_weight >= 0.0 && self.td_weight.is_finite()) {
            return bad("td_weight", "must be finite and non-negative");
        }
        if !(self.action_bound > 0.0 && self.action_bound.is_finite()) {
            return bad("action_bound", "must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.calibration_learning_rate > 0.0 && self.calibration_learning_rate.is_finite()) {
            return bad("calibration_learning_rate", "must be positive");
        }
        if self.hidden == 0 || self.fusion == 0 {
            return bad("hidden", "layer widths must be at least 1");
        }
        if self.calibration_tolerance.is_nan() || self.calibration_tolerance < 0.0 {
            return bad("calibration_tolerance", "must be non-negative");
        }
        Ok(())
    }
}

/// Anything that maps a window to per-axis successor features.
pub trait SuccessorFeatures {
    fn psi(&self, window: &StateWindow) -> (Psi, Psi);

    fn action_bound(&self) -> f64 {
        ACTION_BOUND
    }
}

/// The transferable driving archetype: one branch per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeModel {
    pub version: u32,
    pub seed: u64,
    pub action_bound: f64,
    pub x: Branch,
    pub y: Branch,
}

impl ArchetypeModel {
    pub fn new(cfg: &TrainingConfig, phi_head: bool) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            seed: cfg.seed,
            action_bound: cfg.action_bound,
            x: Branch::seeded(cfg.hidden, cfg.fusion, phi_head, cfg.seed),
            y: Branch::seeded(cfg.hidden, cfg.fusion, phi_head, cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }

    pub fn branches(&self) -> [&Branch; 2] {
        [&self.x, &self.y]
    }
}

impl SuccessorFeatures for ArchetypeModel {
    fn psi(&self, window: &StateWindow) -> (Psi, Psi) {
        (self.x.forward(window).psi, self.y.forward(window).psi)
    }

    fn action_bound(&self) -> f64 {
        self.action_bound
    }
}

/// Per-axis `Psi` for a window, rejecting non-finite activations.
pub fn forward_psi(model: &ArchetypeModel, window: &StateWindow) -> Result<(Psi, Psi)> {
    let (px, py) = model.psi(window);
    if px.iter().chain(&py).all(|v| v.is_finite()) {
        Ok((px, py))
    } else {
        Err(DlirlError::NonFiniteActivation)
    }
}

pub fn dot(a: &Psi, b: &Psi) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unclamped `(Psi_x . w_x, Psi_y . w_y)`.
pub fn raw_action<M: SuccessorFeatures + ?Sized>(model: &M, w: &CultureVector, window: &StateWindow) -> (f64, f64) {
    let (px, py) = model.psi(window);
    (dot(&px, &w.w_x), dot(&py, &w.w_y))
}

/// Regressed action, clamped to the model's bounds.
pub fn predict_action<M: SuccessorFeatures + ?Sized>(model: &M, w: &CultureVector, window: &StateWindow) -> (f64, f64) {
    let (ax, ay) = raw_action(model, w, window);
    let b = model.action_bound();
    (ax.clamp(-b, b), ay.clamp(-b, b))
}

/// Mean squared action error over both axes.
pub fn action_mse<M: SuccessorFeatures + ?Sized>(model: &M, w: &CultureVector, samples: &[ActionSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let (ax, ay) = predict_action(model, w, &s.window);
            (ax - s.target.0).powi(2) + (ay - s.target.1).powi(2)
        })
        .sum();
    total / (2.0 * samples.len() as f64)
}
