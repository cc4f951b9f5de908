use serde::{Deserialize, Serialize};

use crate::rollout::RolloutResult;
use crate::trajectory::VehicleId;

/// Error summary of one rollout over its controlled frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub vehicle_id: VehicleId,
    /// Mean |TTC error| where both simulated and recorded TTC exist, s.
    pub mean_ttc_error: f64,
    pub mean_ax_error: f64,
    pub mean_ay_error: f64,
    /// Largest distance between simulated and recorded positions, m.
    pub max_path_deviation: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn case_report(r: &RolloutResult) -> CaseReport {
    let controlled = || r.records.iter().filter(|s| s.controlled);
    CaseReport {
        vehicle_id: r.vehicle_id,
        mean_ttc_error: mean(controlled().filter_map(|s| Some((s.total_ttc? - s.reference_ttc?).abs()))),
        mean_ax_error: mean(controlled().map(|s| (s.action.0 - s.reference_action.0).abs())),
        mean_ay_error: mean(controlled().map(|s| (s.action.1 - s.reference_action.1).abs())),
        max_path_deviation: r.records.iter().map(|s| s.dx.hypot(s.dy)).fold(0.0, f64::max),
    }
}
