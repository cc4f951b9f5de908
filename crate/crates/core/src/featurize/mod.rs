//! Neighbor assignment, eight-direction TTC and model sample construction.
//!
//! A state vector at frame `k` is
//! `(vx_k, vy_k, ax_{k-1}, ay_{k-1}, ttc_k[front..back_right])`; a window
//! stacks the vectors of frames `k-3..=k` and its target is the acceleration
//! recorded at frame `k`. The first usable window therefore ends at the
//! fifth frame of a track.

mod neighbors;
mod ttc;

pub use neighbors::{assign_slots, Direction, LaneLayout, NeighborSlot, VehicleState};
pub use ttc::{direction_ttc, encode_ttc, total_ttc, ttc_risk, ABSENT_TTC, CLOSING_EPS, RISK_TIME_SCALE, TTC_CAP};

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{TrajectoryDataset, VehicleId, VehicleTrack};

pub const STATE_DIM: usize = 12;
pub const WINDOW_LEN: usize = 4;

pub type StateVector = [f64; STATE_DIM];

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("vehicle {0} not in dataset")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {vehicle_id} has no frame at t = {t}")]
    UnknownTime { vehicle_id: VehicleId, t: f64 },
    #[error("fraction {fraction} outside (0, 1] or selects no window out of {windows}")]
    FractionOutOfRange { fraction: f64, windows: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Four consecutive state vectors, oldest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateWindow {
    pub frames: [StateVector; WINDOW_LEN],
}

impl StateWindow {
    pub fn zeros() -> Self {
        Self {
            frames: [[0.0; STATE_DIM]; WINDOW_LEN],
        }
    }

    pub fn last(&self) -> &StateVector {
        &self.frames[WINDOW_LEN - 1]
    }

    pub fn flatten(&self) -> [f64; STATE_DIM * WINDOW_LEN] {
        std::array::from_fn(|i| self.frames[i / STATE_DIM][i % STATE_DIM])
    }

    /// Range invariants: every value finite, every TTC entry `-1` or within
    /// `[0, TTC_CAP]`.
    pub fn is_valid(&self) -> bool {
        self.frames.iter().all(|f| {
            f.iter().all(|v| v.is_finite())
                && f[4..]
                    .iter()
                    .all(|&ttc| ttc == ABSENT_TTC || (0.0..=TTC_CAP).contains(&ttc))
        })
    }

    /// Window shifted by one step with `next` appended.
    pub fn advanced(&self, next: StateVector) -> Self {
        let mut frames = self.frames;
        frames.rotate_left(1);
        frames[WINDOW_LEN - 1] = next;
        Self { frames }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub window: StateWindow,
    /// Recorded (ax, ay) at the window's last frame.
    pub target: (f64, f64),
    pub vehicle_id: VehicleId,
    pub t: f64,
}

/// Vehicle states grouped by frame slot for fast neighbor lookup.
pub struct SceneIndex<'a> {
    ds: &'a TrajectoryDataset,
    t0: f64,
    by_slot: HashMap<i64, Vec<VehicleState>>,
    lanes: LaneLayout,
}

impl<'a> SceneIndex<'a> {
    pub fn new(ds: &'a TrajectoryDataset) -> Self {
        let t0 = ds
            .tracks
            .iter()
            .filter_map(|t| t.frames.first())
            .map(|f| f.t)
            .fold(f64::INFINITY, f64::min);
        let t0 = if t0.is_finite() { t0 } else { 0.0 };
        let mut by_slot: HashMap<i64, Vec<VehicleState>> = HashMap::new();
        for track in &ds.tracks {
            for frame in &track.frames {
                let key = ((frame.t - t0) / ds.dt).round() as i64;
                by_slot
                    .entry(key)
                    .or_default()
                    .push(VehicleState::from_frame(track, frame));
            }
        }
        Self {
            ds,
            t0,
            by_slot,
            lanes: LaneLayout::new(&ds.lane_centers_y),
        }
    }

    pub fn dataset(&self) -> &TrajectoryDataset {
        self.ds
    }

    pub fn lanes(&self) -> &LaneLayout {
        &self.lanes
    }

    fn key(&self, t: f64) -> i64 {
        ((t - self.t0) / self.ds.dt).round() as i64
    }

    /// Every vehicle recorded at time `t`.
    pub fn vehicles_at(&self, t: f64) -> &[VehicleState] {
        self.by_slot.get(&self.key(t)).map_or(&[], Vec::as_slice)
    }

    /// Slots around `ego` against the recorded vehicles at `t`. The ego's own
    /// recorded state (same id) is skipped.
    pub fn slots_for(&self, ego: &VehicleState, t: f64) -> [NeighborSlot; 8] {
        assign_slots(ego, self.vehicles_at(t), &self.lanes)
    }

    /// State vectors for every frame of `track`; `None` at the first frame,
    /// which has no previous acceleration.
    pub fn track_states(&self, track: &VehicleTrack) -> Vec<Option<StateVector>> {
        track
            .frames
            .iter()
            .enumerate()
            .map(|(k, frame)| {
                let prev = track.frames.get(k.checked_sub(1)?)?;
                let ego = VehicleState::from_frame(track, frame);
                let slots = self.slots_for(&ego, frame.t);
                Some(state_vector(frame.vx, frame.vy, prev.ax, prev.ay, &slots))
            })
            .collect()
    }
}

pub fn state_vector(vx: f64, vy: f64, prev_ax: f64, prev_ay: f64, slots: &[NeighborSlot; 8]) -> StateVector {
    let ttc = encode_ttc(slots);
    let mut s = [0.0; STATE_DIM];
    s[0] = vx;
    s[1] = vy;
    s[2] = prev_ax;
    s[3] = prev_ay;
    s[4..].copy_from_slice(&ttc);
    s
}

/// The eight slots around `vehicle_id` at time `t`.
pub fn assign_neighbors(
    ds: &TrajectoryDataset,
    vehicle_id: VehicleId,
    t: f64,
) -> Result<[NeighborSlot; 8], FeaturizeError> {
    let track = ds.track(vehicle_id).ok_or(FeaturizeError::UnknownVehicle(vehicle_id))?;
    let k = track
        .frame_index_at(t, ds.dt)
        .ok_or(FeaturizeError::UnknownTime { vehicle_id, t })?;
    let index = SceneIndex::new(ds);
    let ego = VehicleState::from_frame(track, &track.frames[k]);
    Ok(index.slots_for(&ego, track.frames[k].t))
}

/// Samples for one track given its precomputed state vectors.
pub fn track_samples(track: &VehicleTrack, states: &[Option<StateVector>]) -> Vec<ActionSample> {
    (WINDOW_LEN..track.frames.len())
        .map(|k| {
            let frames =
                std::array::from_fn(|j| states[k + 1 + j - WINDOW_LEN].expect("window starts after the first frame"));
            let f = &track.frames[k];
            ActionSample {
                window: StateWindow { frames },
                target: (f.ax, f.ay),
                vehicle_id: track.vehicle_id,
                t: f.t,
            }
        })
        .collect()
}

/// One sample per window with a target, over the dataset's ego tracks (all
/// tracks when none are declared), ordered by vehicle id then time.
pub fn extract_samples(ds: &TrajectoryDataset) -> Vec<ActionSample> {
    let index = SceneIndex::new(ds);
    let mut tracks: Vec<&VehicleTrack> = ds.ego_tracks().collect();
    tracks.sort_by_key(|t| t.vehicle_id);
    tracks
        .into_iter()
        .flat_map(|track| {
            let states = index.track_states(track);
            track_samples(track, &states)
        })
        .collect()
}

/// Seeded selection of `ceil(fraction * N)` windows without replacement,
/// kept in their original order.
pub fn subsample_windows(
    samples: &[ActionSample],
    fraction: f64,
    seed: u64,
) -> Result<Vec<ActionSample>, FeaturizeError> {
    let n = samples.len();
    let wanted = fraction * n as f64;
    if !(fraction > 0.0 && fraction <= 1.0) || wanted < 1.0 - 1e-9 {
        return Err(FeaturizeError::FractionOutOfRange { fraction, windows: n });
    }
    let count = ((wanted - 1e-9).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| samples[i]).collect())
}

/// Debug dump: 48 window values followed by the two targets.
pub fn write_sample_dump(samples: &[ActionSample], path: &Path) -> Result<(), FeaturizeError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = Vec::with_capacity(50);
    for j in 0..WINDOW_LEN {
        for name in ["vx", "vy", "ax_prev", "ay_prev"] {
            header.push(format!("{name}_{j}"));
        }
        for d in Direction::ALL {
            header.push(format!(
                "ttc_{}_{j}",
                serde_json::to_value(d).unwrap().as_str().unwrap()
            ));
        }
    }
    header.push("target_ax".into());
    header.push("target_ay".into());
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let vals: Vec<String> = s
            .window
            .flatten()
            .iter()
            .chain([s.target.0, s.target.1].iter())
            .map(f64::to_string)
            .collect();
        writeln!(out, "{}", vals.join(","))?;
    }
    out.flush()?;
    Ok(())
}
