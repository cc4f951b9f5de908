use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{
    dot, raw_action, Adam, CultureVector, DlirlError, Psi, Result, SuccessorFeatures, TrainingConfig, PSI_DIM,
};
use crate::featurize::ActionSample;

/// Ridge strength used when the stacked `Psi` matrix is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub culture: CultureVector,
    pub steps: usize,
    pub final_update_norm: f64,
    pub loss: f64,
}

/// `1/(2N) sum_i (Psi_x,i . w_x - ax_i)^2 + (Psi_y,i . w_y - ay_i)^2`,
/// without clamping.
pub fn culture_loss<M: SuccessorFeatures + ?Sized>(model: &M, w: &CultureVector, samples: &[ActionSample]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let (ax, ay) = raw_action(model, w, &s.window);
            (ax - s.target.0).powi(2) + (ay - s.target.1).powi(2)
        })
        .sum();
    total / (2.0 * samples.len() as f64)
}

/// Gradient of the calibration loss for one axis from per-sample
/// residuals, so exactly matched targets give an exactly zero gradient.
fn axis_gradient(rows: &[(Psi, f64)], w: &[f64]) -> Psi {
    let w: &Psi = w.try_into().expect("axis slice has PSI_DIM entries");
    let n = rows.len() as f64;
    let mut g = [0.0; PSI_DIM];
    for (psi, a) in rows {
        let r = dot(psi, w) - a;
        if r != 0.0 {
            for (gi, p) in g.iter_mut().zip(psi) {
                *gi += r * p / n;
            }
        }
    }
    g
}

fn design_rows<M: SuccessorFeatures + ?Sized>(model: &M, samples: &[ActionSample]) -> [Vec<(Psi, f64)>; 2] {
    let mut rows = [Vec::with_capacity(samples.len()), Vec::with_capacity(samples.len())];
    for s in samples {
        let (px, py) = model.psi(&s.window);
        rows[0].push((px, s.target.0));
        rows[1].push((py, s.target.1));
    }
    rows
}

fn check_count(samples: &[ActionSample]) -> Result<()> {
    if samples.len() < PSI_DIM {
        return Err(DlirlError::InsufficientData {
            have: samples.len(),
            need: PSI_DIM,
        });
    }
    Ok(())
}

/// Re-estimates the culture vector with the archetype frozen: full-batch
/// Adam on the squared action error with respect to `w` only, starting from
/// all-ones. Stops after `calibration_max_steps` or once an update moves `w`
/// by less than `calibration_tolerance`.
pub fn calibrate_culture<M: SuccessorFeatures + ?Sized>(
    model: &M,
    samples: &[ActionSample],
    cfg: &TrainingConfig,
) -> Result<CalibrationRun> {
    check_count(samples)?;
    let rows = design_rows(model, samples);
    let mut w = vec![1.0; 2 * PSI_DIM];
    let mut opt = Adam::new(cfg.calibration_learning_rate, w.len());
    let mut steps = 0;
    let mut norm = f64::INFINITY;
    while steps < cfg.calibration_max_steps {
        let gx = axis_gradient(&rows[0], &w[..PSI_DIM]);
        let gy = axis_gradient(&rows[1], &w[PSI_DIM..]);
        let grad: Vec<f64> = gx.iter().chain(&gy).copied().collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(DlirlError::NonFiniteLoss { epoch: steps });
        }
        norm = opt.update(&mut w, &grad);
        steps += 1;
        if norm < cfg.calibration_tolerance {
            break;
        }
    }
    let culture = CultureVector {
        w_x: w[..PSI_DIM].try_into().unwrap(),
        w_y: w[PSI_DIM..].try_into().unwrap(),
    };
    let loss = culture_loss(model, &culture, samples);
    if !loss.is_finite() {
        return Err(DlirlError::NonFiniteLoss { epoch: steps });
    }
    debug!("calibration stopped after {steps} steps, last update {norm:.3e}, loss {loss:.6e}");
    Ok(CalibrationRun {
        culture,
        steps,
        final_update_norm: norm,
        loss,
    })
}

/// Least-squares solution of one axis and the numerical rank of its design.
fn solve_axis(rows: &[(Psi, f64)]) -> (Psi, usize) {
    let a = DMatrix::from_fn(rows.len(), PSI_DIM, |r, c| rows[r].0[c]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * rows.len().max(PSI_DIM) as f64 * f64::EPSILON;
    let rank = svd.rank(tol);
    let solution = if rank == PSI_DIM {
        svd.solve(&b, tol).expect("singular vectors were computed")
    } else {
        let mut normal = a.transpose() * &a;
        for i in 0..PSI_DIM {
            normal[(i, i)] += RIDGE_LAMBDA;
        }
        let rhs = a.transpose() * b;
        normal
            .cholesky()
            .expect("ridge-regularized normal matrix is positive definite")
            .solve(&rhs)
    };
    (std::array::from_fn(|i| solution[i]), rank)
}

/// Exact per-axis least squares `min_w sum_i (Psi_i . w - a_i)^2`. When a
/// design matrix is rank deficient the ridge solution is carried inside
/// [`DlirlError::RankDeficient`].
pub fn closed_form_culture<M: SuccessorFeatures + ?Sized>(
    model: &M,
    samples: &[ActionSample],
) -> Result<CultureVector> {
    if samples.is_empty() {
        return Err(DlirlError::InsufficientData { have: 0, need: 1 });
    }
    let rows = design_rows(model, samples);
    let (w_x, rank_x) = solve_axis(&rows[0]);
    let (w_y, rank_y) = solve_axis(&rows[1]);
    let culture = CultureVector { w_x, w_y };
    let rank = rank_x.min(rank_y);
    if rank < PSI_DIM {
        return Err(DlirlError::RankDeficient {
            rank,
            dim: PSI_DIM,
            solution: Box::new(culture),
        });
    }
    Ok(culture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::StateWindow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Successor features read directly from the first window frame, so each
    /// sample carries its own `Psi` rows.
    struct Lookup;

    impl SuccessorFeatures for Lookup {
        fn psi(&self, window: &StateWindow) -> (Psi, Psi) {
            let f = window.frames[0];
            let g = window.frames[1];
            (f, g)
        }
    }

    fn sample(px: Psi, py: Psi, target: (f64, f64)) -> ActionSample {
        let mut window = StateWindow::zeros();
        window.frames[0] = px;
        window.frames[1] = py;
        ActionSample {
            window,
            target,
            vehicle_id: 0,
            t: 0.0,
        }
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, w: &CultureVector, noise: f64) -> Vec<ActionSample> {
        (0..n)
            .map(|_| {
                let px: Psi = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let py: Psi = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let ax = dot(&px, &w.w_x) + noise * rng.random_range(-1.0..1.0);
                let ay = dot(&py, &w.w_y) + noise * rng.random_range(-1.0..1.0);
                sample(px, py, (ax, ay))
            })
            .collect()
    }

    fn random_w(rng: &mut ChaCha8Rng) -> CultureVector {
        CultureVector {
            w_x: std::array::from_fn(|_| rng.random_range(-1.0..1.5)),
            w_y: std::array::from_fn(|_| rng.random_range(-1.0..1.5)),
        }
    }

    #[test]
    fn consistent_system_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = random_w(&mut rng);
        let samples = random_set(&mut rng, 40, &w, 0.0);
        let got = closed_form_culture(&Lookup, &samples).unwrap();
        assert!(got.linf_distance(&w) < 1e-9);
    }

    #[test]
    fn twelve_samples_interpolate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_w(&mut rng);
        let samples = random_set(&mut rng, 12, &w, 0.3);
        let got = closed_form_culture(&Lookup, &samples).unwrap();
        assert!(culture_loss(&Lookup, &got, &samples) < 1e-20);
    }

    #[test]
    fn duplicates_do_not_move_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_w(&mut rng);
        let samples = random_set(&mut rng, 30, &w, 0.2);
        let doubled: Vec<_> = samples.iter().chain(&samples).copied().collect();
        let a = closed_form_culture(&Lookup, &samples).unwrap();
        let b = closed_form_culture(&Lookup, &doubled).unwrap();
        assert!(a.linf_distance(&b) < 1e-10);
    }

    #[test]
    fn rank_deficient_design_falls_back_to_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<_> = (0..20)
            .map(|_| {
                let mut px: Psi = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                px[11] = px[10];
                let py: Psi = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                sample(px, py, (rng.random_range(-1.0..1.0), 0.0))
            })
            .collect();
        match closed_form_culture(&Lookup, &samples) {
            Err(DlirlError::RankDeficient { rank, solution, .. }) => {
                assert_eq!(rank, 11);
                // Ridge splits the weight evenly across the duplicated column.
                assert!((solution.w_x[10] - solution.w_x[11]).abs() < 1e-9);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn matched_targets_leave_ones_in_place() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = random_set(&mut rng, 30, &CultureVector::ones(), 0.0);
        let run = calibrate_culture(&Lookup, &samples, &TrainingConfig::default()).unwrap();
        assert_eq!(run.culture, CultureVector::ones());
        assert_eq!(run.steps, 1);
    }

    #[test]
    fn calibration_reaches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_w(&mut rng);
        let samples = random_set(&mut rng, 100, &w, 0.1);
        let run = calibrate_culture(&Lookup, &samples, &TrainingConfig::default()).unwrap();
        let exact = closed_form_culture(&Lookup, &samples).unwrap();
        assert!(
            run.culture.linf_distance(&exact) < 1e-3,
            "{}",
            run.culture.linf_distance(&exact)
        );
        assert!(run.loss - culture_loss(&Lookup, &exact, &samples) < 1e-6);
        assert!(run.steps <= 5000);
    }

    #[test]
    fn needs_twelve_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples = random_set(&mut rng, 11, &CultureVector::ones(), 0.0);
        assert!(matches!(
            calibrate_culture(&Lookup, &samples, &TrainingConfig::default()),
            Err(DlirlError::InsufficientData { have: 11, need: 12 })
        ));
    }
}
