use serde::{Deserialize, Serialize};

use super::density::quantile_sorted;
use super::{MetricsError, Result};
use crate::trajectory::{TrajectoryDataset, VehicleTrack};

/// Frames a new lane must be held for a change to count.
pub const LANE_PERSIST_FRAMES: usize = 5;

/// True when the track enters a lane other than its established one and
/// stays in it for at least [`LANE_PERSIST_FRAMES`] consecutive frames. The
/// first recorded lane is established; a brief excursion that returns to
/// it is not a change.
pub fn has_sustained_lane_change(track: &VehicleTrack) -> bool {
    let lanes: Vec<u32> = track.frames.iter().map(|f| f.lane_id).collect();
    let Some(&established) = lanes.first() else {
        return false;
    };
    (1..lanes.len()).any(|i| {
        lanes[i] != lanes[i - 1]
            && lanes[i] != established
            && i + LANE_PERSIST_FRAMES <= lanes.len()
            && lanes[i..i + LANE_PERSIST_FRAMES].iter().all(|&l| l == lanes[i])
    })
}

/// Share of tracks with a sustained lane change.
pub fn lane_change_frequency(ds: &TrajectoryDataset) -> Result<f64> {
    if ds.tracks.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let changed = ds.tracks.iter().filter(|t| has_sustained_lane_change(t)).count();
    Ok(changed as f64 / ds.tracks.len() as f64)
}

/// Box-plot summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    Some(Quartiles {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}
