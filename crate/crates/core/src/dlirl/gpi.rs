use super::{dot, predict_action, CultureVector, DlirlError, Result, SuccessorFeatures};
use crate::featurize::{state_vector, NeighborSlot, StateWindow};

/// Relative tolerance under which two candidate scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;
/// Offsets of the default grid around the regressed action, m/s^2.
const DEFAULT_OFFSETS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Candidate accelerations per axis; the grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
}

impl ActionGrid {
    pub fn new(ax: Vec<f64>, ay: Vec<f64>) -> Self {
        Self { ax, ay }
    }

    pub fn singleton(a: (f64, f64)) -> Self {
        Self::new(vec![a.0], vec![a.1])
    }

    /// Five values per axis spanning +-1 m/s^2 around `center`, clamped to
    /// `bound`, duplicates removed.
    pub fn around(center: (f64, f64), bound: f64) -> Self {
        let axis = |c: f64| {
            let mut v: Vec<f64> = DEFAULT_OFFSETS.iter().map(|o| (c + o).clamp(-bound, bound)).collect();
            v.dedup();
            v
        };
        Self::new(axis(center.0), axis(center.1))
    }

    pub fn is_empty(&self) -> bool {
        self.ax.is_empty() || self.ay.is_empty()
    }

    pub fn candidates(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ax
            .iter()
            .flat_map(move |&ax| self.ay.iter().map(move |&ay| (ax, ay)))
    }
}

/// What the lookahead needs beyond the window: the current neighbor slots,
/// the step length and the discount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpiContext {
    pub slots: [NeighborSlot; 8],
    pub dt: f64,
    pub gamma: f64,
}

/// Window and slots after the ego applies `action` for one step. Neighbors
/// keep their last observed velocities.
pub fn advance_window(
    window: &StateWindow,
    slots: &[NeighborSlot; 8],
    action: (f64, f64),
    dt: f64,
) -> (StateWindow, [NeighborSlot; 8]) {
    let last = window.last();
    let (vx, vy) = (last[0], last[1]);
    let v_after = ((vx + action.0 * dt).max(0.0), vy + action.1 * dt);
    let disp = (vx * dt + 0.5 * action.0 * dt * dt, vy * dt + 0.5 * action.1 * dt * dt);
    let next_slots = slots.map(|s| s.propagated((vx, vy), v_after, disp, dt));
    let next = state_vector(v_after.0, v_after.1, action.0, action.1, &next_slots);
    (window.advanced(next), next_slots)
}

fn q_value<M: SuccessorFeatures + ?Sized>(model: &M, w: &CultureVector, window: &StateWindow) -> f64 {
    let (px, py) = model.psi(window);
    dot(&px, &w.w_x) + dot(&py, &w.w_y)
}

/// One-step generalized policy improvement over `grid`: each candidate `a`
/// scores `Q(s, a) + gamma * max_a' Q(s', a')`, where `s'` is the window
/// advanced by `a` and `Q(s, a) = Psi(advance(s, a)) . w` summed over axes.
/// Ties go to the candidate closest to the regressed action, then to the
/// lexicographically smallest.
pub fn gpi_select_action<M: SuccessorFeatures + ?Sized>(
    model: &M,
    w: &CultureVector,
    window: &StateWindow,
    ctx: &GpiContext,
    grid: &ActionGrid,
) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(DlirlError::EmptyGrid);
    }
    let scored: Vec<((f64, f64), f64)> = grid
        .candidates()
        .map(|a| {
            let (s1, slots1) = advance_window(window, &ctx.slots, a, ctx.dt);
            let q = q_value(model, w, &s1);
            let lookahead = grid
                .candidates()
                .map(|a2| q_value(model, w, &advance_window(&s1, &slots1, a2, ctx.dt).0))
                .fold(f64::NEG_INFINITY, f64::max);
            (a, q + ctx.gamma * lookahead)
        })
        .collect();
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let regressed = predict_action(model, w, window);
    let dist = |a: (f64, f64)| (a.0 - regressed.0).powi(2) + (a.1 - regressed.1).powi(2);
    scored
        .iter()
        .filter(|(_, s)| best - s <= TIE_TOLERANCE * best.abs())
        .map(|&(a, _)| a)
        .min_by(|&a, &b| {
            dist(a)
                .total_cmp(&dist(b))
                .then(a.0.total_cmp(&b.0))
                .then(a.1.total_cmp(&b.1))
        })
        .ok_or(DlirlError::EmptyGrid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlirl::{Psi, PSI_DIM};
    use crate::featurize::{Direction, ABSENT_TTC};

    /// Successor features that encode the previous action of the last frame,
    /// so `Q(s, a)` depends only on `a`: `-(ax^2 + ay^2)` with unit weights on
    /// the first component.
    struct Bowl;

    impl SuccessorFeatures for Bowl {
        fn psi(&self, window: &StateWindow) -> (Psi, Psi) {
            let last = window.last();
            let mut px = [0.0; PSI_DIM];
            let mut py = [0.0; PSI_DIM];
            px[0] = -last[2] * last[2];
            py[0] = -last[3] * last[3];
            (px, py)
        }
    }

    fn unit_w() -> CultureVector {
        let mut w = CultureVector {
            w_x: [0.0; PSI_DIM],
            w_y: [0.0; PSI_DIM],
        };
        w.w_x[0] = 1.0;
        w.w_y[0] = 1.0;
        w
    }

    fn ctx() -> GpiContext {
        GpiContext {
            slots: std::array::from_fn(|i| NeighborSlot::empty(Direction::ALL[i])),
            dt: 0.2,
            gamma: 0.9,
        }
    }

    fn window(ax_prev: f64) -> StateWindow {
        let mut w = StateWindow::zeros();
        for f in w.frames.iter_mut() {
            f[0] = 20.0;
            f[2] = ax_prev;
            f[4..].iter_mut().for_each(|v| *v = ABSENT_TTC);
        }
        w
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let a = gpi_select_action(
            &Bowl,
            &unit_w(),
            &window(0.3),
            &ctx(),
            &ActionGrid::singleton((0.7, -0.2)),
        )
        .unwrap();
        assert_eq!(a, (0.7, -0.2));
    }

    #[test]
    fn bowl_prefers_the_point_nearest_zero() {
        let grid = ActionGrid::new(vec![-1.0, -0.4, 0.6], vec![-0.5, 0.25, 1.0]);
        let a = gpi_select_action(&Bowl, &unit_w(), &window(0.0), &ctx(), &grid).unwrap();
        assert_eq!(a, (-0.4, 0.25));
    }

    #[test]
    fn ties_go_to_the_regressed_action() {
        // Regressed action is (-0.09, 0): both +-1 tie on score, -1 is nearer.
        let grid = ActionGrid::new(vec![-1.0, 1.0], vec![0.0]);
        let a = gpi_select_action(&Bowl, &unit_w(), &window(0.3), &ctx(), &grid).unwrap();
        assert_eq!(a, (-1.0, 0.0));
        // Equidistant ties resolve lexicographically.
        let a = gpi_select_action(&Bowl, &unit_w(), &window(0.0), &ctx(), &grid).unwrap();
        assert_eq!(a, (-1.0, 0.0));
    }

    #[test]
    fn empty_grid_is_an_error() {
        let grid = ActionGrid::new(vec![], vec![0.0]);
        assert!(matches!(
            gpi_select_action(&Bowl, &unit_w(), &window(0.0), &ctx(), &grid),
            Err(DlirlError::EmptyGrid)
        ));
    }

    #[test]
    fn default_grid_clamps_and_dedups() {
        let g = ActionGrid::around((4.6, 0.0), 5.0);
        let expected = [3.6, 4.1, 4.6, 5.0];
        assert_eq!(g.ax.len(), 4);
        assert!(g.ax.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(g.ay, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.candidates().count(), 20);
    }

    #[test]
    fn advance_moves_kinematics_and_gaps() {
        let mut slots = ctx().slots;
        slots[0] = NeighborSlot {
            occupant: Some(7),
            d_x: 10.0,
            dv_x: 2.0,
            side_x: 1.0,
            ..NeighborSlot::empty(Direction::Front)
        };
        let (next, next_slots) = advance_window(&window(0.0), &slots, (1.0, 0.5), 0.2);
        let last = next.last();
        assert!((last[0] - 20.2).abs() < 1e-12);
        assert!((last[1] - 0.1).abs() < 1e-12);
        assert_eq!((last[2], last[3]), (1.0, 0.5));
        // Gap shrinks by the closing speed over dt plus the extra displacement.
        assert!((next_slots[0].d_x - (10.0 - 0.4 - 0.02)).abs() < 1e-12);
        assert!((next_slots[0].dv_x - 2.2).abs() < 1e-12);
        assert!((last[4] - next_slots[0].d_x / 2.2).abs() < 1e-12);
    }
}
