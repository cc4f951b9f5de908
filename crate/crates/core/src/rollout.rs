//! Closed-loop replay: one ego vehicle is driven by a policy while every
//! other vehicle replays its recording.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dlirl::{
    gpi_select_action, predict_action, ActionGrid, ArchetypeModel, CultureVector, GpiContext, SuccessorFeatures,
};
use crate::featurize::{
    state_vector, total_ttc, NeighborSlot, SceneIndex, StateVector, StateWindow, VehicleState, WINDOW_LEN,
};
use crate::trajectory::{
    nearest_lane, write_canonical_csv, DatasetMeta, Frame, TrajectoryDataset, TrajectoryError, VehicleId, VehicleTrack,
    MIN_TRACK_FRAMES,
};

/// Recorded frames replayed before the policy takes over.
pub const WARMUP_FRAMES: usize = MIN_TRACK_FRAMES;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("vehicle {0} not in dataset")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {vehicle_id} has {frames} frames, need at least {WARMUP_FRAMES}")]
    TrackTooShort { vehicle_id: VehicleId, frames: usize },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub gpi: bool,
    pub gamma: f64,
    pub teacher_forced: bool,
    pub action_bound: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            gpi: false,
            gamma: 0.9,
            teacher_forced: false,
            action_bound: crate::dlirl::ACTION_BOUND,
        }
    }
}

/// What a driver sees at one controlled frame.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub window: &'a StateWindow,
    pub slots: &'a [NeighborSlot; 8],
    pub frame_index: usize,
    pub dt: f64,
    /// The recorded frame of the ego at this time.
    pub reference: &'a Frame,
}

pub trait Driver {
    fn act(&self, obs: &Observation<'_>) -> (f64, f64);
}

/// Drives with a model and culture vector, optionally refined by GPI.
pub struct ModelDriver<'a, M: SuccessorFeatures + ?Sized> {
    pub model: &'a M,
    pub culture: &'a CultureVector,
    pub gpi: bool,
    pub gamma: f64,
}

impl<M: SuccessorFeatures + ?Sized> Driver for ModelDriver<'_, M> {
    fn act(&self, obs: &Observation<'_>) -> (f64, f64) {
        let regressed = predict_action(self.model, self.culture, obs.window);
        if !self.gpi {
            return regressed;
        }
        let ctx = GpiContext {
            slots: *obs.slots,
            dt: obs.dt,
            gamma: self.gamma,
        };
        let grid = ActionGrid::around(regressed, self.model.action_bound());
        gpi_select_action(self.model, self.culture, obs.window, &ctx, &grid).unwrap_or(regressed)
    }
}

/// Replays the recorded action at every frame.
pub struct RecordedDriver;

impl Driver for RecordedDriver {
    fn act(&self, obs: &Observation<'_>) -> (f64, f64) {
        (obs.reference.ax, obs.reference.ay)
    }
}

/// Ego kinematics after holding `action` for `dt`: constant acceleration,
/// forward speed floored at zero, lane by nearest center.
pub fn step_ego(state: &VehicleState, action: (f64, f64), dt: f64, lane_centers_y: &[f64]) -> VehicleState {
    let mut s = *state;
    s.x += state.vx * dt + 0.5 * action.0 * dt * dt;
    s.y += state.vy * dt + 0.5 * action.1 * dt * dt;
    s.vx = (state.vx + action.0 * dt).max(0.0);
    s.vy = state.vy + action.1 * dt;
    s.lane_id = nearest_lane(lane_centers_y, s.y);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    /// False for replayed warm-up frames.
    pub controlled: bool,
    pub action: (f64, f64),
    pub reference_action: (f64, f64),
    pub total_ttc: Option<f64>,
    pub reference_ttc: Option<f64>,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub vehicle_id: VehicleId,
    pub teacher_forced: bool,
    pub simulated: VehicleTrack,
    pub reference: VehicleTrack,
    pub records: Vec<StepRecord>,
}

/// Rollout of `vehicle_id` under `model` and `culture`.
pub fn run_rollout(
    ds: &TrajectoryDataset,
    vehicle_id: VehicleId,
    model: &ArchetypeModel,
    culture: &CultureVector,
    cfg: &RolloutConfig,
) -> Result<RolloutResult, RolloutError> {
    let driver = ModelDriver {
        model,
        culture,
        gpi: cfg.gpi,
        gamma: cfg.gamma,
    };
    run_rollout_with(&SceneIndex::new(ds), vehicle_id, &driver, cfg)
}

fn to_frame(s: &VehicleState, t: f64, action: (f64, f64)) -> Frame {
    Frame {
        t,
        x: s.x,
        y: s.y,
        vx: s.vx,
        vy: s.vy,
        ax: action.0,
        ay: action.1,
        lane_id: s.lane_id,
    }
}

/// Rollout against a prebuilt scene index, with any driver.
///
/// The first [`WARMUP_FRAMES`] frames replay the recording; control starts
/// with the action at the last warm-up frame, the first frame with a full
/// window. In teacher-forced mode each step starts from the recorded state
/// and history instead of the simulated one.
pub fn run_rollout_with(
    index: &SceneIndex<'_>,
    vehicle_id: VehicleId,
    driver: &dyn Driver,
    cfg: &RolloutConfig,
) -> Result<RolloutResult, RolloutError> {
    let ds = index.dataset();
    let track = ds.track(vehicle_id).ok_or(RolloutError::UnknownVehicle(vehicle_id))?;
    let n = track.frames.len();
    if n < WARMUP_FRAMES {
        return Err(RolloutError::TrackTooShort { vehicle_id, frames: n });
    }
    let first_control = WARMUP_FRAMES - 1;
    let recorded_states = index.track_states(track);
    let bound = cfg.action_bound;

    let mut sim_frames: Vec<Frame> = Vec::with_capacity(n);
    let mut history: Vec<StateVector> = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut state = VehicleState::from_frame(track, &track.frames[0]);
    let mut prev_action = (0.0, 0.0);

    for k in 0..n {
        let reference = &track.frames[k];
        if cfg.teacher_forced && k > first_control {
            state = step_ego(
                &VehicleState::from_frame(track, &track.frames[k - 1]),
                prev_action,
                ds.dt,
                &ds.lane_centers_y,
            );
        }
        let slots = index.slots_for(&state, reference.t);
        let prev_applied = if k == 0 {
            (0.0, 0.0)
        } else if cfg.teacher_forced {
            (track.frames[k - 1].ax, track.frames[k - 1].ay)
        } else {
            prev_action
        };
        history.push(state_vector(state.vx, state.vy, prev_applied.0, prev_applied.1, &slots));

        let ref_state = VehicleState::from_frame(track, reference);
        let ref_slots = index.slots_for(&ref_state, reference.t);
        let controlled = k >= first_control;
        let action = if controlled {
            let window = if cfg.teacher_forced {
                StateWindow {
                    frames: std::array::from_fn(|j| {
                        recorded_states[k + 1 + j - WINDOW_LEN].expect("window starts after frame 0")
                    }),
                }
            } else {
                StateWindow {
                    frames: std::array::from_fn(|j| history[k + 1 + j - WINDOW_LEN]),
                }
            };
            let obs = Observation {
                window: &window,
                slots: if cfg.teacher_forced { &ref_slots } else { &slots },
                frame_index: k,
                dt: ds.dt,
                reference,
            };
            let (ax, ay) = driver.act(&obs);
            (ax.clamp(-bound, bound), ay.clamp(-bound, bound))
        } else {
            (reference.ax, reference.ay)
        };

        records.push(StepRecord {
            t: reference.t,
            controlled,
            action,
            reference_action: (reference.ax, reference.ay),
            total_ttc: total_ttc(&slots),
            reference_ttc: total_ttc(&ref_slots),
            dx: state.x - reference.x,
            dy: state.y - reference.y,
        });
        sim_frames.push(to_frame(&state, reference.t, action));

        if k + 1 < n {
            state = if controlled {
                step_ego(&state, action, ds.dt, &ds.lane_centers_y)
            } else {
                VehicleState::from_frame(track, &track.frames[k + 1])
            };
        }
        prev_action = action;
    }

    Ok(RolloutResult {
        vehicle_id,
        teacher_forced: cfg.teacher_forced,
        simulated: VehicleTrack {
            vehicle_id,
            frames: sim_frames,
            length: track.length,
            width: track.width,
        },
        reference: track.clone(),
        records,
    })
}

/// Dataset holding the simulated ego tracks of `results` in place of their
/// recordings, with every other track kept.
pub fn substitute_tracks(ds: &TrajectoryDataset, results: &[RolloutResult]) -> TrajectoryDataset {
    let mut out = ds.clone();
    for r in results {
        if let Some(t) = out.tracks.iter_mut().find(|t| t.vehicle_id == r.vehicle_id) {
            *t = r.simulated.clone();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub vehicle_id: VehicleId,
    /// Mean |TTC error| over controlled frames where both TTCs exist, s.
    pub mean_ttc_error: f64,
    /// Mean |delta a| over controlled frames (Euclidean), m/s^2.
    pub mean_action_error: f64,
    /// Path deviation at the last frame, m.
    pub final_path_deviation: f64,
}

pub fn summarize(r: &RolloutResult) -> TraceSummary {
    let controlled: Vec<&StepRecord> = r.records.iter().filter(|s| s.controlled).collect();
    let ttc: Vec<f64> = controlled
        .iter()
        .filter_map(|s| Some((s.total_ttc? - s.reference_ttc?).abs()))
        .collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let da: Vec<f64> = controlled
        .iter()
        .map(|s| (s.action.0 - s.reference_action.0).hypot(s.action.1 - s.reference_action.1))
        .collect();
    let last = r.records.last();
    TraceSummary {
        vehicle_id: r.vehicle_id,
        mean_ttc_error: mean(&ttc),
        mean_action_error: mean(&da),
        final_path_deviation: last.map_or(0.0, |s| s.dx.hypot(s.dy)),
    }
}

/// Writes the simulated track as canonical CSV (with sidecar) and a JSON
/// summary next to it (`<stem>.summary.json`).
pub fn export_trace(ds: &TrajectoryDataset, r: &RolloutResult, csv_path: &Path) -> Result<(), RolloutError> {
    let single = TrajectoryDataset {
        tracks: vec![r.simulated.clone()],
        meta: DatasetMeta {
            source: format!("rollout:{}", ds.meta.source),
            si_units: ds.meta.si_units,
            ego_ids: vec![r.vehicle_id],
        },
        ..ds.clone()
    };
    write_canonical_csv(&single, csv_path)?;
    let summary_path = csv_path.with_extension("summary.json");
    std::fs::write(summary_path, serde_json::to_string_pretty(&summarize(r))? + "\n")?;
    Ok(())
}
