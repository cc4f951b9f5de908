use serde::{Deserialize, Serialize};

use crate::trajectory::{Frame, VehicleId, VehicleTrack};

/// The eight neighbor directions, in state-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Front,
    Back,
    Left,
    Right,
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::Front,
        Direction::Back,
        Direction::Left,
        Direction::Right,
        Direction::FrontLeft,
        Direction::FrontRight,
        Direction::BackLeft,
        Direction::BackRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The direction seen in a scene reflected across the road axis.
    pub fn mirrored(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::FrontLeft => Direction::FrontRight,
            Direction::FrontRight => Direction::FrontLeft,
            Direction::BackLeft => Direction::BackRight,
            Direction::BackRight => Direction::BackLeft,
            d => d,
        }
    }
}

/// Kinematic snapshot of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub lane_id: u32,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn from_frame(track: &VehicleTrack, frame: &Frame) -> Self {
        Self {
            id: track.vehicle_id,
            x: frame.x,
            y: frame.y,
            vx: frame.vx,
            vy: frame.vy,
            lane_id: frame.lane_id,
            length: track.length,
            width: track.width,
        }
    }
}

/// Lateral ordering of lanes: `rank[lane]` grows to the left.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneLayout {
    rank: Vec<usize>,
}

impl LaneLayout {
    pub fn new(lane_centers_y: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..lane_centers_y.len()).collect();
        order.sort_by(|&a, &b| lane_centers_y[a].total_cmp(&lane_centers_y[b]).then(a.cmp(&b)));
        let mut rank = vec![0; lane_centers_y.len()];
        for (r, lane) in order.into_iter().enumerate() {
            rank[lane] = r;
        }
        Self { rank }
    }

    /// +1 if `other` is the lane immediately left of `lane`, -1 if
    /// immediately right, 0 if the same lane, `None` otherwise.
    pub fn relation(&self, lane: u32, other: u32) -> Option<i32> {
        let a = *self.rank.get(lane as usize)? as i64;
        let b = *self.rank.get(other as usize)? as i64;
        match b - a {
            d @ -1..=1 => Some(d as i32),
            _ => None,
        }
    }
}

/// One of the eight slots around an ego vehicle. Gap and closing-speed
/// fields are meaningful only when `occupant` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborSlot {
    pub direction: Direction,
    pub occupant: Option<VehicleId>,
    /// Bumper-to-bumper longitudinal gap, floored at 0.
    pub d_x: f64,
    /// Side-to-side lateral gap, floored at 0.
    pub d_y: f64,
    /// Longitudinal closing speed; positive when the gap shrinks.
    pub dv_x: f64,
    /// Lateral closing speed; positive when the gap shrinks.
    pub dv_y: f64,
    /// Sign of the neighbor's center offset from the ego (`x`, `y`), used
    /// to propagate the gap under a hypothetical ego action.
    pub side_x: f64,
    pub side_y: f64,
}

impl NeighborSlot {
    pub fn empty(direction: Direction) -> Self {
        Self {
            direction,
            occupant: None,
            d_x: 0.0,
            d_y: 0.0,
            dv_x: 0.0,
            dv_y: 0.0,
            side_x: 0.0,
            side_y: 0.0,
        }
    }

    pub fn is_occupied(&self) -> bool {
        self.occupant.is_some()
    }

    /// Slot after the ego moves from velocity `v_before` to `v_after` with
    /// displacement `disp` over `dt`, the neighbor keeping its velocity.
    pub fn propagated(&self, v_before: (f64, f64), v_after: (f64, f64), disp: (f64, f64), dt: f64) -> Self {
        if !self.is_occupied() {
            return *self;
        }
        // side * v_other = side * v_ego - closing speed
        let gap = |d: f64, side: f64, dv: f64, v: f64, s: f64| (d + side * v * dt - dv * dt - side * s).max(0.0);
        Self {
            d_x: gap(self.d_x, self.side_x, self.dv_x, v_before.0, disp.0),
            d_y: gap(self.d_y, self.side_y, self.dv_y, v_before.1, disp.1),
            dv_x: self.dv_x + self.side_x * (v_after.0 - v_before.0),
            dv_y: self.dv_y + self.side_y * (v_after.1 - v_before.1),
            ..*self
        }
    }
}

/// Assigns the nearest vehicle to each of the eight directions around `ego`.
///
/// Same-lane vehicles fill front/back. Vehicles in the adjacent lanes whose
/// center lies within half an ego length of the ego center fill left/right;
/// the remaining adjacent-lane vehicles fill the diagonals. Ties on distance
/// go to the smaller vehicle id.
pub fn assign_slots<'a>(
    ego: &VehicleState,
    others: impl IntoIterator<Item = &'a VehicleState>,
    lanes: &LaneLayout,
) -> [NeighborSlot; 8] {
    let mut best: [Option<(f64, VehicleId, &VehicleState)>; 8] = [None; 8];
    for other in others {
        if other.id == ego.id {
            continue;
        }
        let Some(rel) = lanes.relation(ego.lane_id, other.lane_id) else {
            continue;
        };
        let dx = other.x - ego.x;
        let alongside = dx.abs() <= 0.5 * ego.length;
        let dir = match (rel, alongside, dx >= 0.0) {
            (0, _, true) => Direction::Front,
            (0, _, false) => Direction::Back,
            (1, true, _) => Direction::Left,
            (-1, true, _) => Direction::Right,
            (1, false, true) => Direction::FrontLeft,
            (1, false, false) => Direction::BackLeft,
            (_, false, true) => Direction::FrontRight,
            (_, false, false) => Direction::BackRight,
            _ => unreachable!(),
        };
        let key = (dx.abs(), other.id);
        let slot = &mut best[dir.index()];
        let better = match slot {
            None => true,
            Some((d, id, _)) => key.0 < *d || (key.0 == *d && key.1 < *id),
        };
        if better {
            *slot = Some((key.0, key.1, other));
        }
    }
    std::array::from_fn(|i| {
        let direction = Direction::ALL[i];
        match best[i] {
            None => NeighborSlot::empty(direction),
            Some((_, _, other)) => occupied_slot(direction, ego, other),
        }
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn occupied_slot(direction: Direction, ego: &VehicleState, other: &VehicleState) -> NeighborSlot {
    let dx = other.x - ego.x;
    let dy = other.y - ego.y;
    let side_x = sign(dx);
    let side_y = sign(dy);
    NeighborSlot {
        direction,
        occupant: Some(other.id),
        d_x: (dx.abs() - 0.5 * (ego.length + other.length)).max(0.0),
        d_y: (dy.abs() - 0.5 * (ego.width + other.width)).max(0.0),
        dv_x: side_x * (ego.vx - other.vx),
        dv_y: side_y * (ego.vy - other.vy),
        side_x,
        side_y,
    }
}
