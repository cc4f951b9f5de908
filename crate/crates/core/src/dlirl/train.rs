use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Adam, ArchetypeModel, DlirlError, Psi, Result, TrainingConfig, PSI_DIM};
use crate::featurize::{ActionSample, StateWindow, WINDOW_LEN};

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// every trained coefficient, does not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub model: ArchetypeModel,
    pub loss_curve: Vec<EpochLoss>,
    /// Epoch whose coefficients were kept (lowest held-out loss).
    pub best_epoch: usize,
}

struct Gradients {
    loss: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &ArchetypeModel) -> Self {
        Self {
            loss: 0.0,
            x: vec![0.0; model.x.params.len()],
            y: vec![0.0; model.y.params.len()],
        }
    }

    fn add(mut self, other: Gradients) -> Self {
        self.loss += other.loss;
        self.x.iter_mut().zip(&other.x).for_each(|(a, b)| *a += b);
        self.y.iter_mut().zip(&other.y).for_each(|(a, b)| *a += b);
        self
    }
}

/// True when `next` is the window one step after `window` on the same track.
fn follows(window: &StateWindow, next: &StateWindow) -> bool {
    window.frames[1..] == next.frames[..WINDOW_LEN - 1]
}

fn next_indices(samples: &[ActionSample]) -> Vec<Option<usize>> {
    (0..samples.len())
        .map(|i| {
            let next = samples.get(i + 1)?;
            (next.vehicle_id == samples[i].vehicle_id && follows(&samples[i].window, &next.window)).then_some(i + 1)
        })
        .collect()
}

/// Loss and gradient contributions of `batch`, normalized by `denom`.
fn accumulate(
    model: &ArchetypeModel,
    samples: &[ActionSample],
    next: &[Option<usize>],
    batch: &[usize],
    denom: f64,
    cfg: &TrainingConfig,
) -> Gradients {
    let mut g = Gradients::zeros(model);
    let td = cfg.td_weight > 0.0 && model.x.phi_head;
    for &i in batch {
        let s = &samples[i];
        let targets = [s.target.0, s.target.1];
        for (axis, branch) in model.branches().into_iter().enumerate() {
            let trace = branch.forward(&s.window);
            let err = trace.psi.iter().sum::<f64>() - targets[axis];
            g.loss += err * err / (2.0 * denom);
            let mut d_psi: Psi = [err / denom; PSI_DIM];
            let mut d_phi = None;
            if let (true, Some(j)) = (td, next[i]) {
                // Semi-gradient: the successor target is held constant.
                let target_next = branch.forward(&samples[j].window).psi;
                let phi = trace.phi.expect("phi head present");
                let mut dp = [0.0; PSI_DIM];
                for k in 0..PSI_DIM {
                    let r = trace.psi[k] - phi[k] - cfg.gamma * target_next[k];
                    g.loss += cfg.td_weight * r * r / denom;
                    d_psi[k] += 2.0 * cfg.td_weight * r / denom;
                    dp[k] = -2.0 * cfg.td_weight * r / denom;
                }
                d_phi = Some(dp);
            }
            let grad = if axis == 0 { &mut g.x } else { &mut g.y };
            branch.backward(&trace, &d_psi, d_phi.as_ref(), grad);
        }
    }
    g
}

fn batch_gradients(
    model: &ArchetypeModel,
    samples: &[ActionSample],
    next: &[Option<usize>],
    batch: &[usize],
    cfg: &TrainingConfig,
) -> Gradients {
    let denom = batch.len() as f64;
    let parts: Vec<Gradients> = batch
        .par_chunks(CHUNK)
        .map(|chunk| accumulate(model, samples, next, chunk, denom, cfg))
        .collect();
    parts.into_iter().fold(Gradients::zeros(model), Gradients::add)
}

/// Mean-squared-error loss `1/(2B) sum_i |Psi_i . 1 - a_i|^2` over both
/// axes with the culture vector at all-ones, and its gradient with respect
/// to each branch's coefficients.
pub fn batch_loss_and_grad(model: &ArchetypeModel, batch: &[ActionSample]) -> (f64, Vec<f64>, Vec<f64>) {
    let idx: Vec<usize> = (0..batch.len()).collect();
    let cfg = TrainingConfig {
        td_weight: 0.0,
        ..TrainingConfig::default()
    };
    let g = batch_gradients(model, batch, &vec![None; batch.len()], &idx, &cfg);
    (g.loss, g.x, g.y)
}

fn mse(model: &ArchetypeModel, samples: &[ActionSample], idx: &[usize]) -> f64 {
    let total: f64 = idx
        .par_chunks(256)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let s = &samples[i];
                    let ex = model.x.forward(&s.window).psi.iter().sum::<f64>() - s.target.0;
                    let ey = model.y.forward(&s.window).psi.iter().sum::<f64>() - s.target.1;
                    ex * ex + ey * ey
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    total / (2.0 * idx.len() as f64)
}

/// Fits both branches by mini-batch Adam with the culture vector fixed at
/// all-ones. A seeded 10% of the samples is held out, and the coefficients
/// with the lowest held-out loss are returned.
pub fn train_archetype(samples: &[ActionSample], cfg: &TrainingConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    if samples.len() < cfg.batch_size {
        return Err(DlirlError::InsufficientData {
            have: samples.len(),
            need: cfg.batch_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = samples.len() / 10;
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut model = ArchetypeModel::new(cfg, cfg.td_weight > 0.0);
    model.x.fit_inputs(train_idx.iter().map(|&i| &samples[i].window));
    model.y.input_shift = model.x.input_shift;
    model.y.input_scale = model.x.input_scale;
    let next = next_indices(samples);

    let mut opt_x = Adam::new(cfg.learning_rate, model.x.params.len());
    let mut opt_y = Adam::new(cfg.learning_rate, model.y.params.len());
    let mut best = (f64::INFINITY, model.clone(), 0);
    let mut curve = Vec::with_capacity(cfg.epochs);
    info!(
        "training archetype on {} samples ({} held out), {} epochs",
        train_idx.len(),
        val_idx.len(),
        cfg.epochs
    );

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let g = batch_gradients(&model, samples, &next, batch, cfg);
            if !g.loss.is_finite() || g.x.iter().chain(&g.y).any(|v| !v.is_finite()) {
                return Err(DlirlError::NonFiniteLoss { epoch });
            }
            weighted += g.loss * batch.len() as f64;
            opt_x.update(&mut model.x.params, &g.x);
            opt_y.update(&mut model.y.params, &g.y);
        }
        let train = weighted / train_idx.len() as f64;
        let validation = (!val_idx.is_empty()).then(|| mse(&model, samples, &val_idx));
        let score = validation.unwrap_or(train);
        if !score.is_finite() {
            return Err(DlirlError::NonFiniteLoss { epoch });
        }
        debug!("epoch {epoch}: train {train:.6e}, validation {validation:?}");
        curve.push(EpochLoss {
            epoch,
            train,
            validation,
        });
        if score < best.0 {
            best = (score, model.clone(), epoch);
        }
    }
    Ok(TrainingRun {
        model: best.1,
        loss_curve: curve,
        best_epoch: best.2,
    })
}
