use super::neighbors::NeighborSlot;

/// Upper bound for any per-direction TTC, in seconds.
pub const TTC_CAP: f64 = 100.0;
/// Closing speeds at or below this do not count as closing (m/s).
pub const CLOSING_EPS: f64 = 1e-3;
/// Encoding of an empty direction inside a state vector.
pub const ABSENT_TTC: f64 = -1.0;

/// Time scale of the risk encoding, in seconds.
pub const RISK_TIME_SCALE: f64 = 10.0;

/// Bounded risk in `[0, 1]` for a state-vector TTC entry: `exp(-ttc / 10 s)`
/// for a present neighbor, 0 for an empty direction.
pub fn ttc_risk(ttc: f64) -> f64 {
    if ttc < 0.0 {
        0.0
    } else {
        (-ttc / RISK_TIME_SCALE).exp()
    }
}

fn axis_term(gap: f64, closing: f64) -> Option<f64> {
    (closing > CLOSING_EPS).then(|| (gap / closing.abs()).clamp(0.0, TTC_CAP))
}

/// Time to collision for one direction: the sum of the per-axis gap over
/// closing-speed terms, counting only axes that are closing. A present but
/// non-closing neighbor yields the cap; an empty slot yields `None`.
pub fn direction_ttc(slot: &NeighborSlot) -> Option<f64> {
    slot.occupant?;
    let terms = [axis_term(slot.d_x, slot.dv_x), axis_term(slot.d_y, slot.dv_y)];
    if terms.iter().all(Option::is_none) {
        return Some(TTC_CAP);
    }
    Some(terms.iter().flatten().sum::<f64>().min(TTC_CAP))
}

/// Mean direction TTC over occupied slots.
pub fn total_ttc(slots: &[NeighborSlot]) -> Option<f64> {
    let present: Vec<f64> = slots.iter().filter_map(direction_ttc).collect();
    if present.is_empty() {
        return None;
    }
    Some(present.iter().sum::<f64>() / present.len() as f64)
}

/// Per-direction values as stored in a state vector (`-1` when empty).
pub fn encode_ttc(slots: &[NeighborSlot; 8]) -> [f64; 8] {
    std::array::from_fn(|i| direction_ttc(&slots[i]).unwrap_or(ABSENT_TTC))
}
