//! Scripted highway worlds with a known culture.
//!
//! Background vehicles follow IDM car following with occasional scripted
//! lane changes. Ego vehicles pick accelerations as `phi*(window) . w_true`
//! per axis plus Gaussian noise, where `phi*` is a fixed seeded feature map.
//! Because the ego action is linear in `w_true`, a frozen feature extractor
//! plus least squares recovers the culture exactly in the noise-free case.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{
    assign_slots, state_vector, ttc_risk, LaneLayout, StateVector, StateWindow, VehicleState, WINDOW_LEN,
};
use crate::trajectory::{nearest_lane, DatasetMeta, Frame, TrajectoryDataset, VehicleTrack};

pub const FEATURE_DIM: usize = 12;
pub const SYNTH_DT: f64 = 0.2;
pub const LANE_WIDTH: f64 = 3.75;
pub const SYNTH_LANES: u32 = 3;

/// Frames driven by IDM before ego control starts; the first ego-controlled
/// frame is the first one with a complete window.
pub const WARMUP_FRAMES: usize = WINDOW_LEN;

const LANE_CHANGE_SECONDS: f64 = 4.0;
const VEHICLE_LENGTH: f64 = 4.5;
const VEHICLE_WIDTH: f64 = 1.8;
const IDM_MIN_GAP: f64 = 2.0;
const IDM_MAX_DECEL: f64 = 9.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid culture spec: `{field}` {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("need at least 2 tracks and 5 s of driving, got {n_tracks} tracks over {duration} s")]
    TooSmall { n_tracks: usize, duration: f64 },
    #[error("every vehicle is in contact with its leader after warm-up")]
    DegenerateWorld,
}

/// IDM-style car-following parameters for background traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub max_accel: f64,
    pub comfortable_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 28.0,
            time_headway: 1.5,
            max_accel: 1.0,
            comfortable_decel: 2.0,
        }
    }
}

impl IdmParams {
    /// IDM acceleration toward `desired` speed behind a leader at bumper gap
    /// `gap` closing at `closing` m/s.
    pub fn accel(&self, v: f64, desired: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / desired).powi(4);
        let interaction = leader.map_or(0.0, |(gap, closing)| {
            let s_star = IDM_MIN_GAP
                + (v * self.time_headway + v * closing / (2.0 * (self.max_accel * self.comfortable_decel).sqrt()))
                    .max(0.0);
            (s_star / gap.max(0.1)).powi(2)
        });
        (self.max_accel * (free - interaction)).clamp(-IDM_MAX_DECEL, self.max_accel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CultureSpec {
    pub w_true_x: [f64; FEATURE_DIM],
    pub w_true_y: [f64; FEATURE_DIM],
    pub noise_sigma: f64,
    pub neighbor_params: IdmParams,
    pub lane_change_rate: f64,
}

impl CultureSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |field, reason: &str| {
            Err(SynthError::InvalidSpec {
                field,
                reason: reason.to_string(),
            })
        };
        if !self.w_true_x.iter().chain(&self.w_true_y).all(|w| w.is_finite()) {
            return bad("w_true", "must be finite");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be >= 0");
        }
        let p = &self.neighbor_params;
        for (field, v) in [
            ("neighbor_params.desired_speed", p.desired_speed),
            ("neighbor_params.time_headway", p.time_headway),
            ("neighbor_params.max_accel", p.max_accel),
            ("neighbor_params.comfortable_decel", p.comfortable_decel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, "must be > 0");
            }
        }
        if !(0.0..=1.0).contains(&self.lane_change_rate) {
            return bad("lane_change_rate", "must be within [0, 1]");
        }
        Ok(())
    }
}

/// Squashing function applied after the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Squash {
    Tanh,
}

impl Squash {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Squash::Tanh => v.tanh(),
        }
    }
}

/// Scales of the fixed input encoding, one per state-vector slot before the
/// TTC entries.
const KINEMATIC_CENTER: [f64; 4] = [25.0, 0.0, 0.0, 0.0];
const KINEMATIC_SCALE: [f64; 4] = [5.0, 0.5, 1.0, 0.5];

/// Fixed encoding of the window's latest state vector: kinematics centered
/// and scaled, TTC entries mapped to risk in `[0, 1]`.
pub fn encode_state(state: &StateVector) -> [f64; FEATURE_DIM] {
    std::array::from_fn(|i| {
        if i < 4 {
            (state[i] - KINEMATIC_CENTER[i]) / KINEMATIC_SCALE[i]
        } else {
            ttc_risk(state[i])
        }
    })
}

/// Ground-truth cumulant map `phi*(window) = squash(P . encode(window))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFeatureMap {
    pub projection: [[f64; FEATURE_DIM]; FEATURE_DIM],
    pub nonlinearity: Squash,
    pub seed: u64,
}

/// Diagonal of the projection: speed and lateral-velocity features damp
/// deviations, the rest respond positively to their own input.
const PROJECTION_DIAGONAL: [f64; FEATURE_DIM] = [-1.0, -2.0, 0.8, -0.8, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5];
const PROJECTION_MIXING: f64 = 0.6;

impl GroundTruthFeatureMap {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut projection = [[0.0; FEATURE_DIM]; FEATURE_DIM];
        for (i, row) in projection.iter_mut().enumerate() {
            for (j, p) in row.iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                // The lateral-velocity feature stays a pure damper.
                let mix = if i == 1 || j == 1 {
                    0.0
                } else {
                    PROJECTION_MIXING * noise
                };
                *p = if i == j { PROJECTION_DIAGONAL[i] } else { mix };
            }
        }
        Self {
            projection,
            nonlinearity: Squash::Tanh,
            seed,
        }
    }

    /// Feature vector for an already encoded input.
    pub fn eval_encoded(&self, z: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|i| {
            let pre: f64 = self.projection[i].iter().zip(z).map(|(p, v)| p * v).sum();
            self.nonlinearity.apply(pre)
        })
    }

    pub fn eval(&self, window: &StateWindow) -> [f64; FEATURE_DIM] {
        self.eval_encoded(&encode_state(window.last()))
    }
}

/// Ground-truth ego action for a window, noise-free.
pub fn ground_truth_action(map: &GroundTruthFeatureMap, spec: &CultureSpec, window: &StateWindow) -> (f64, f64) {
    let phi = map.eval(window);
    (dot(&phi, &spec.w_true_x), dot(&phi, &spec.w_true_y))
}

fn dot(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
struct LaneChange {
    start: f64,
    delta_y: f64,
}

impl LaneChange {
    /// Lateral acceleration of a smooth one-lane maneuver at time `t`.
    fn lateral_accel(&self, t: f64) -> f64 {
        let tau = t - self.start;
        if !(0.0..LANE_CHANGE_SECONDS).contains(&tau) {
            return 0.0;
        }
        let w = 2.0 * std::f64::consts::PI / LANE_CHANGE_SECONDS;
        self.delta_y / LANE_CHANGE_SECONDS * w * (w * tau).sin()
    }
}

struct SimVehicle {
    state: VehicleState,
    ego: bool,
    desired_speed: f64,
    lane_change: Option<LaneChange>,
    frames: Vec<Frame>,
    history: Vec<StateVector>,
    prev_accel: (f64, f64),
}

/// Generates a world of `n_tracks` vehicles driving for `duration` seconds
/// at `SYNTH_DT`. Every other vehicle (starting with the first) is an ego
/// driven by the culture; the rest are IDM background traffic. Ego ids are
/// recorded in the dataset metadata.
pub fn gen_world(
    spec: &CultureSpec,
    map: &GroundTruthFeatureMap,
    n_tracks: usize,
    duration: f64,
    seed: u64,
) -> Result<TrajectoryDataset, SynthError> {
    spec.validate()?;
    if n_tracks < 2 || duration.is_nan() || duration < 5.0 {
        return Err(SynthError::TooSmall { n_tracks, duration });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("sigma validated");
    let centers: Vec<f64> = (0..SYNTH_LANES).map(|l| (l as f64 + 0.5) * LANE_WIDTH).collect();
    let lanes = LaneLayout::new(&centers);
    let steps = (duration / SYNTH_DT).round() as usize + 1;

    let mut next_x = vec![0.0; SYNTH_LANES as usize];
    let mut vehicles: Vec<SimVehicle> = (0..n_tracks)
        .map(|i| {
            let lane = (i % SYNTH_LANES as usize) as u32;
            let x = next_x[lane as usize];
            next_x[lane as usize] += rng.random_range(30.0..60.0);
            let ego = i % 2 == 0;
            let desired_speed = spec.neighbor_params.desired_speed * rng.random_range(0.9..1.1);
            let speed = if ego {
                rng.random_range(23.0..27.0)
            } else {
                0.9 * desired_speed
            };
            let lane_change = (!ego && rng.random_bool(spec.lane_change_rate)).then(|| {
                let latest = (duration - LANE_CHANGE_SECONDS - 2.0).max(WARMUP_FRAMES as f64 * SYNTH_DT);
                let start = rng.random_range(WARMUP_FRAMES as f64 * SYNTH_DT..=latest);
                let up = match lane {
                    0 => true,
                    l if l + 1 == SYNTH_LANES => false,
                    _ => rng.random_bool(0.5),
                };
                LaneChange {
                    start,
                    delta_y: if up { LANE_WIDTH } else { -LANE_WIDTH },
                }
            });
            SimVehicle {
                state: VehicleState {
                    id: i as u64 + 1,
                    x,
                    y: centers[lane as usize],
                    vx: speed,
                    vy: 0.0,
                    lane_id: lane,
                    length: VEHICLE_LENGTH,
                    width: VEHICLE_WIDTH,
                },
                ego,
                desired_speed,
                lane_change,
                frames: Vec::with_capacity(steps),
                history: Vec::with_capacity(steps),
                prev_accel: (0.0, 0.0),
            }
        })
        .collect();

    for k in 0..steps {
        let t = k as f64 * SYNTH_DT;
        let snapshot: Vec<VehicleState> = vehicles.iter().map(|v| v.state).collect();
        if k == WARMUP_FRAMES && all_in_contact(&snapshot, &lanes) {
            return Err(SynthError::DegenerateWorld);
        }
        let mut actions = Vec::with_capacity(vehicles.len());
        for v in vehicles.iter_mut() {
            let slots = assign_slots(&v.state, &snapshot, &lanes);
            let state = state_vector(v.state.vx, v.state.vy, v.prev_accel.0, v.prev_accel.1, &slots);
            v.history.push(state);
            let (mut ax, ay) = if v.ego && k >= WARMUP_FRAMES {
                let window = StateWindow {
                    frames: std::array::from_fn(|j| v.history[k + 1 + j - WINDOW_LEN]),
                };
                let (ax, ay) = ground_truth_action(map, spec, &window);
                let (nx, ny): (f64, f64) = (noise.sample(&mut rng), noise.sample(&mut rng));
                (ax + nx, ay + ny)
            } else {
                let front = slots[0];
                let leader = front.occupant.map(|_| (front.d_x, front.dv_x));
                let desired = if v.ego { v.state.vx } else { v.desired_speed };
                let ax = spec.neighbor_params.accel(v.state.vx, desired, leader);
                let ay = v.lane_change.map_or(0.0, |lc| lc.lateral_accel(t));
                (ax, ay)
            };
            if v.state.vx + ax * SYNTH_DT < 0.0 {
                ax = -v.state.vx / SYNTH_DT;
            }
            actions.push((ax, ay));
        }
        for (v, &(ax, ay)) in vehicles.iter_mut().zip(&actions) {
            let s = &mut v.state;
            v.frames.push(Frame {
                t,
                x: s.x,
                y: s.y,
                vx: s.vx,
                vy: s.vy,
                ax,
                ay,
                lane_id: s.lane_id,
            });
            s.x += s.vx * SYNTH_DT + 0.5 * ax * SYNTH_DT * SYNTH_DT;
            s.y += s.vy * SYNTH_DT + 0.5 * ay * SYNTH_DT * SYNTH_DT;
            s.vx += ax * SYNTH_DT;
            s.vy += ay * SYNTH_DT;
            s.lane_id = nearest_lane(&centers, s.y);
            v.prev_accel = (ax, ay);
        }
    }

    let ego_ids = vehicles.iter().filter(|v| v.ego).map(|v| v.state.id).collect();
    let tracks = vehicles
        .into_iter()
        .map(|v| VehicleTrack {
            vehicle_id: v.state.id,
            frames: v.frames,
            length: v.state.length,
            width: v.state.width,
        })
        .collect();
    let ds = TrajectoryDataset {
        tracks,
        dt: SYNTH_DT,
        lane_count: SYNTH_LANES,
        lane_centers_y: centers,
        meta: DatasetMeta {
            source: "synthetic".into(),
            si_units: true,
            ego_ids,
        },
    };
    debug_assert!(ds.validate().is_ok());
    Ok(ds)
}

fn all_in_contact(states: &[VehicleState], lanes: &LaneLayout) -> bool {
    states.iter().all(|s| {
        let front = assign_slots(s, states, lanes)[0];
        front.occupant.is_some() && front.d_x <= 0.0
    })
}

/// Two reference cultures sharing one feature map: a brisk one and a
/// cautious one with a different lateral temperament.
pub mod presets {
    use super::*;

    pub fn culture_a() -> CultureSpec {
        CultureSpec {
            w_true_x: [0.6, 0.0, 0.25, 0.0, -0.5, 0.15, -0.05, -0.05, -0.2, -0.1, 0.05, 0.05],
            w_true_y: [0.0, 0.4, 0.0, 0.1, 0.0, 0.0, -0.05, 0.05, -0.03, 0.03, 0.02, -0.02],
            noise_sigma: 0.05,
            neighbor_params: IdmParams::default(),
            lane_change_rate: 0.3,
        }
    }

    pub fn culture_b() -> CultureSpec {
        CultureSpec {
            w_true_x: [0.3, 0.0, -0.2, 0.0, -0.8, 0.05, 0.1, 0.1, -0.4, 0.05, -0.05, 0.1],
            w_true_y: [0.0, 0.6, 0.0, 0.2, 0.0, 0.0, 0.05, -0.05, 0.03, -0.03, -0.02, 0.02],
            noise_sigma: 0.05,
            neighbor_params: IdmParams {
                desired_speed: 24.0,
                time_headway: 1.2,
                ..IdmParams::default()
            },
            lane_change_rate: 0.2,
        }
    }
}
