//! Canonical trajectory data model.
//!
//! Everything downstream works in SI units on a straight multi-lane segment:
//! `x` runs along the road in the direction of travel, `y` is lateral with
//! larger values to the left. Lanes are numbered `0..lane_count` and
//! `lane_centers_y[lane_id]` gives the lateral center of each lane.

mod csv_io;
mod import;
mod sample;

pub use csv_io::{parse_canonical_csv, sidecar_path, write_canonical_csv, Sidecar, CANONICAL_HEADER};
pub use import::{import_highd_like, import_ngsim_like, FEET_TO_METERS, HIGHD_RATE_HZ, NGSIM_RATE_HZ};
pub use sample::sample_fraction;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when comparing frame spacing against the dataset `dt`.
pub const DT_TOLERANCE: f64 = 1e-9;

/// Minimum frames for a track to yield one window plus a target.
pub const MIN_TRACK_FRAMES: usize = 5;

pub type VehicleId = u64;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("sidecar error: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{column}` value `{value}`")]
    BadValue { row: usize, column: String, value: String },
    #[error("vehicle {vehicle_id}: time does not increase at row {row}")]
    NonMonotonicTime { vehicle_id: VehicleId, row: usize },
    #[error("vehicle {vehicle_id}: frame spacing {found} differs from dt {expected} (row {row})")]
    InconsistentDt {
        vehicle_id: VehicleId,
        row: usize,
        expected: f64,
        found: f64,
    },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("vehicle {vehicle_id}: {frames} frames, need at least {MIN_TRACK_FRAMES}")]
    TrackTooShort { vehicle_id: VehicleId, frames: usize },
    #[error("vehicle {0} appears more than once")]
    DuplicateVehicle(VehicleId),
    #[error("vehicle {vehicle_id}: lane {lane_id} outside 0..{lane_count}")]
    LaneOutOfRange {
        vehicle_id: VehicleId,
        lane_id: u32,
        lane_count: u32,
    },
    #[error("lane {0} has no recorded frames and no declared center")]
    UnknownLaneCenter(u32),
    #[error("vehicle {0}: length and width must be positive")]
    InvalidDimensions(VehicleId),
    #[error("dt must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("fraction {fraction} outside (0, 1] or selects no track out of {tracks}")]
    FractionOutOfRange { fraction: f64, tracks: usize },
}

pub type Result<T> = std::result::Result<T, TrajectoryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub lane_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub vehicle_id: VehicleId,
    pub frames: Vec<Frame>,
    pub length: f64,
    pub width: f64,
}

impl VehicleTrack {
    /// Index of the frame recorded at `t`, if any.
    pub fn frame_index_at(&self, t: f64, dt: f64) -> Option<usize> {
        let first = self.frames.first()?.t;
        let k = ((t - first) / dt).round();
        if k < 0.0 {
            return None;
        }
        let k = k as usize;
        let frame = self.frames.get(k)?;
        ((frame.t - t).abs() <= 0.5 * dt).then_some(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    pub source: String,
    pub si_units: bool,
    /// Vehicles whose actions come from the behavior being modeled. Empty
    /// means every track is eligible.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ego_ids: Vec<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub tracks: Vec<VehicleTrack>,
    pub dt: f64,
    pub lane_count: u32,
    pub lane_centers_y: Vec<f64>,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    /// Checks every dataset invariant except per-track minimum length.
    pub fn validate_structure(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(TrajectoryError::InvalidDt(self.dt));
        }
        let mut seen = std::collections::HashSet::new();
        for track in &self.tracks {
            if !seen.insert(track.vehicle_id) {
                return Err(TrajectoryError::DuplicateVehicle(track.vehicle_id));
            }
            if !(track.length > 0.0 && track.width > 0.0) {
                return Err(TrajectoryError::InvalidDimensions(track.vehicle_id));
            }
            for (i, pair) in track.frames.windows(2).enumerate() {
                let step = pair[1].t - pair[0].t;
                if step <= 0.0 {
                    return Err(TrajectoryError::NonMonotonicTime {
                        vehicle_id: track.vehicle_id,
                        row: i + 1,
                    });
                }
                if (step - self.dt).abs() > DT_TOLERANCE {
                    return Err(TrajectoryError::InconsistentDt {
                        vehicle_id: track.vehicle_id,
                        row: i + 1,
                        expected: self.dt,
                        found: step,
                    });
                }
            }
            for frame in &track.frames {
                if frame.lane_id >= self.lane_count {
                    return Err(TrajectoryError::LaneOutOfRange {
                        vehicle_id: track.vehicle_id,
                        lane_id: frame.lane_id,
                        lane_count: self.lane_count,
                    });
                }
            }
        }
        Ok(())
    }

    /// Full invariant check, including the five-frame minimum per track.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        for track in &self.tracks {
            if track.frames.len() < MIN_TRACK_FRAMES {
                return Err(TrajectoryError::TrackTooShort {
                    vehicle_id: track.vehicle_id,
                    frames: track.frames.len(),
                });
            }
        }
        Ok(())
    }

    pub fn track(&self, vehicle_id: VehicleId) -> Option<&VehicleTrack> {
        self.tracks.iter().find(|t| t.vehicle_id == vehicle_id)
    }

    /// Vehicles whose behavior should be learned: the declared egos, or all.
    pub fn ego_tracks(&self) -> impl Iterator<Item = &VehicleTrack> {
        let egos = &self.meta.ego_ids;
        self.tracks
            .iter()
            .filter(move |t| egos.is_empty() || egos.contains(&t.vehicle_id))
    }

    /// Lane whose center is closest to `y`.
    pub fn nearest_lane(&self, y: f64) -> u32 {
        nearest_lane(&self.lane_centers_y, y)
    }

    pub fn frame_count(&self) -> usize {
        self.tracks.iter().map(|t| t.frames.len()).sum()
    }
}

pub fn nearest_lane(centers: &[f64], y: f64) -> u32 {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (c - y).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best as u32
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Constant-velocity track in a single lane.
    pub fn straight_track(id: VehicleId, frames: usize, dt: f64, x0: f64, y: f64, vx: f64, lane: u32) -> VehicleTrack {
        VehicleTrack {
            vehicle_id: id,
            frames: (0..frames)
                .map(|k| {
                    let t = k as f64 * dt;
                    Frame {
                        t,
                        x: x0 + vx * t,
                        y,
                        vx,
                        vy: 0.0,
                        ax: 0.0,
                        ay: 0.0,
                        lane_id: lane,
                    }
                })
                .collect(),
            length: 4.5,
            width: 1.8,
        }
    }

    pub fn dataset(tracks: Vec<VehicleTrack>, dt: f64) -> TrajectoryDataset {
        TrajectoryDataset {
            tracks,
            dt,
            lane_count: 3,
            lane_centers_y: vec![0.0, 3.75, 7.5],
            meta: DatasetMeta {
                source: "test".into(),
                si_units: true,
                ego_ids: Vec::new(),
            },
        }
    }
}
