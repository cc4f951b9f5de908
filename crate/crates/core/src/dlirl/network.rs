//! Per-axis successor-feature branch: a gated recurrent encoder over the
//! four-step window, a fusion layer that combines the final hidden state
//! with the latest encoded frame, and linear Psi (and optional Phi) heads.
//! Psi also receives the latest encoded frame through a linear skip that
//! starts at the identity, so each Psi component begins as one state feature
//! plus a learned correction.
//!
//! All coefficients of a branch live in one flat vector; [`Layout`] gives
//! the offset and shape of every named block in row-major order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::{ttc_risk, StateWindow, STATE_DIM};

pub const PSI_DIM: usize = 12;
pub const INPUT_DIM: usize = STATE_DIM;
/// Kinematic inputs that are standardized; the TTC entries use the risk map.
pub const KINEMATIC_INPUTS: usize = 4;

pub type Psi = [f64; PSI_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    GateZInput,
    GateZHidden,
    GateZBias,
    GateRInput,
    GateRHidden,
    GateRBias,
    CandInput,
    CandHidden,
    CandBias,
    FuseHidden,
    FuseInput,
    FuseBias,
    PsiWeight,
    PsiBias,
    PsiSkip,
    PhiWeight,
    PhiBias,
}

impl Block {
    pub const ALL: [Block; 17] = [
        Block::GateZInput,
        Block::GateZHidden,
        Block::GateZBias,
        Block::GateRInput,
        Block::GateRHidden,
        Block::GateRBias,
        Block::CandInput,
        Block::CandHidden,
        Block::CandBias,
        Block::FuseHidden,
        Block::FuseInput,
        Block::FuseBias,
        Block::PsiWeight,
        Block::PsiBias,
        Block::PsiSkip,
        Block::PhiWeight,
        Block::PhiBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::GateZInput => "gate_z_input",
            Block::GateZHidden => "gate_z_hidden",
            Block::GateZBias => "gate_z_bias",
            Block::GateRInput => "gate_r_input",
            Block::GateRHidden => "gate_r_hidden",
            Block::GateRBias => "gate_r_bias",
            Block::CandInput => "candidate_input",
            Block::CandHidden => "candidate_hidden",
            Block::CandBias => "candidate_bias",
            Block::FuseHidden => "fusion_hidden",
            Block::FuseInput => "fusion_input",
            Block::FuseBias => "fusion_bias",
            Block::PsiWeight => "psi_weight",
            Block::PsiBias => "psi_bias",
            Block::PsiSkip => "psi_skip",
            Block::PhiWeight => "phi_weight",
            Block::PhiBias => "phi_bias",
        }
    }
}

/// Offsets of every coefficient block inside a branch's flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub fusion: usize,
    pub phi_head: bool,
    offsets: [usize; 18],
}

impl Layout {
    pub fn new(hidden: usize, fusion: usize, phi_head: bool) -> Self {
        let mut offsets = [0; 18];
        let mut at = 0;
        for (i, block) in Block::ALL.iter().enumerate() {
            offsets[i] = at;
            let (r, c) = Self::shape_of(*block, hidden, fusion, phi_head);
            at += r * c;
        }
        offsets[17] = at;
        Self {
            hidden,
            fusion,
            phi_head,
            offsets,
        }
    }

    fn shape_of(block: Block, h: usize, f: usize, phi: bool) -> (usize, usize) {
        match block {
            Block::GateZInput | Block::GateRInput | Block::CandInput => (h, INPUT_DIM),
            Block::GateZHidden | Block::GateRHidden | Block::CandHidden => (h, h),
            Block::GateZBias | Block::GateRBias | Block::CandBias => (h, 1),
            Block::FuseHidden => (f, h),
            Block::FuseInput => (f, INPUT_DIM),
            Block::FuseBias => (f, 1),
            Block::PsiWeight => (PSI_DIM, f),
            Block::PsiBias => (PSI_DIM, 1),
            Block::PsiSkip => (PSI_DIM, INPUT_DIM),
            Block::PhiWeight if phi => (PSI_DIM, f),
            Block::PhiBias if phi => (PSI_DIM, 1),
            Block::PhiWeight | Block::PhiBias => (0, 0),
        }
    }

    pub fn shape(&self, block: Block) -> (usize, usize) {
        Self::shape_of(block, self.hidden, self.fusion, self.phi_head)
    }

    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        let i = block as usize;
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn len(&self) -> usize {
        self.offsets[17]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One axis of the archetype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub hidden: usize,
    pub fusion: usize,
    pub phi_head: bool,
    /// Standardization of (vx, vy, ax_prev, ay_prev).
    pub input_shift: [f64; KINEMATIC_INPUTS],
    pub input_scale: [f64; KINEMATIC_INPUTS],
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    inputs: Vec<[f64; INPUT_DIM]>,
    hs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    rs: Vec<Vec<f64>>,
    ns: Vec<Vec<f64>>,
    us: Vec<Vec<f64>>,
    g: Vec<f64>,
    pub psi: Psi,
    pub phi: Option<Psi>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `out += M x` for row-major `M` of shape (rows, x.len()).
fn mat_vec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T y` for row-major `M` of shape (y.len(), out.len()).
fn mat_t_vec_add(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `G += y x^T`.
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(x) {
            *o += yr * b;
        }
    }
}

impl Branch {
    /// Glorot-uniform weights, zero biases, a zero Psi head and an identity
    /// skip, so Psi starts as the latest encoded frame.
    pub fn init(hidden: usize, fusion: usize, phi_head: bool, rng: &mut ChaCha8Rng) -> Self {
        let layout = Layout::new(hidden, fusion, phi_head);
        let mut params = vec![0.0; layout.len()];
        for block in Block::ALL {
            let name = block.name();
            if name.ends_with("bias") || block == Block::PsiWeight {
                continue;
            }
            if block == Block::PsiSkip {
                let range = layout.range(block);
                for i in 0..PSI_DIM {
                    params[range.start + i * INPUT_DIM + i] = 1.0;
                }
                continue;
            }
            let (r, c) = layout.shape(block);
            let limit = (6.0 / (r + c) as f64).sqrt();
            for p in &mut params[layout.range(block)] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Self {
            hidden,
            fusion,
            phi_head,
            input_shift: [0.0; KINEMATIC_INPUTS],
            input_scale: [1.0; KINEMATIC_INPUTS],
            params,
        }
    }

    pub fn seeded(hidden: usize, fusion: usize, phi_head: bool, seed: u64) -> Self {
        Self::init(hidden, fusion, phi_head, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.hidden, self.fusion, self.phi_head)
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.params[self.layout().range(block)]
    }

    pub fn encode(&self, state: &[f64; STATE_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|i| {
            if i < KINEMATIC_INPUTS {
                (state[i] - self.input_shift[i]) / self.input_scale[i]
            } else {
                ttc_risk(state[i])
            }
        })
    }

    pub fn forward(&self, window: &StateWindow) -> Trace {
        let lay = self.layout();
        let p = &self.params;
        let h_dim = self.hidden;
        let mut trace = Trace {
            hs: vec![vec![0.0; h_dim]],
            ..Trace::default()
        };
        for frame in &window.frames {
            let x = self.encode(frame);
            let h = trace.hs.last().unwrap();
            let mut az = p[lay.range(Block::GateZBias)].to_vec();
            mat_vec_add(&p[lay.range(Block::GateZInput)], &x, &mut az);
            mat_vec_add(&p[lay.range(Block::GateZHidden)], h, &mut az);
            let z: Vec<f64> = az.into_iter().map(sigmoid).collect();

            let mut ar = p[lay.range(Block::GateRBias)].to_vec();
            mat_vec_add(&p[lay.range(Block::GateRInput)], &x, &mut ar);
            mat_vec_add(&p[lay.range(Block::GateRHidden)], h, &mut ar);
            let r: Vec<f64> = ar.into_iter().map(sigmoid).collect();

            let mut u = vec![0.0; h_dim];
            mat_vec_add(&p[lay.range(Block::CandHidden)], h, &mut u);
            let mut an = p[lay.range(Block::CandBias)].to_vec();
            mat_vec_add(&p[lay.range(Block::CandInput)], &x, &mut an);
            let n: Vec<f64> = an
                .iter()
                .zip(&r)
                .zip(&u)
                .map(|((a, r), u)| (a + r * u).tanh())
                .collect();

            let h_next: Vec<f64> = (0..h_dim).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
            trace.inputs.push(x);
            trace.zs.push(z);
            trace.rs.push(r);
            trace.us.push(u);
            trace.ns.push(n);
            trace.hs.push(h_next);
        }

        let h_last = trace.hs.last().unwrap();
        let x_last = trace.inputs.last().unwrap();
        let mut ag = p[lay.range(Block::FuseBias)].to_vec();
        mat_vec_add(&p[lay.range(Block::FuseHidden)], h_last, &mut ag);
        mat_vec_add(&p[lay.range(Block::FuseInput)], x_last, &mut ag);
        trace.g = ag.into_iter().map(f64::tanh).collect();

        let mut psi = [0.0; PSI_DIM];
        psi.copy_from_slice(&p[lay.range(Block::PsiBias)]);
        mat_vec_add(&p[lay.range(Block::PsiWeight)], &trace.g, &mut psi);
        mat_vec_add(&p[lay.range(Block::PsiSkip)], x_last, &mut psi);
        trace.psi = psi;
        if self.phi_head {
            let mut phi = [0.0; PSI_DIM];
            phi.copy_from_slice(&p[lay.range(Block::PhiBias)]);
            mat_vec_add(&p[lay.range(Block::PhiWeight)], &trace.g, &mut phi);
            trace.phi = Some(phi);
        }
        trace
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to this pass's Psi output is `d_psi` (and `d_phi` for the
    /// optional head).
    pub fn backward(&self, trace: &Trace, d_psi: &Psi, d_phi: Option<&Psi>, grad: &mut [f64]) {
        let lay = self.layout();
        let p = &self.params;
        let h_dim = self.hidden;

        outer_add(&mut grad[lay.range(Block::PsiWeight)], d_psi, &trace.g);
        for (g, d) in grad[lay.range(Block::PsiBias)].iter_mut().zip(d_psi) {
            *g += d;
        }
        outer_add(
            &mut grad[lay.range(Block::PsiSkip)],
            d_psi,
            trace.inputs.last().unwrap(),
        );
        let mut dg = vec![0.0; self.fusion];
        mat_t_vec_add(&p[lay.range(Block::PsiWeight)], d_psi, &mut dg);
        if let (Some(d_phi), true) = (d_phi, self.phi_head) {
            outer_add(&mut grad[lay.range(Block::PhiWeight)], d_phi, &trace.g);
            for (g, d) in grad[lay.range(Block::PhiBias)].iter_mut().zip(d_phi) {
                *g += d;
            }
            mat_t_vec_add(&p[lay.range(Block::PhiWeight)], d_phi, &mut dg);
        }

        let d_ag: Vec<f64> = dg.iter().zip(&trace.g).map(|(d, g)| d * (1.0 - g * g)).collect();
        let h_last = trace.hs.last().unwrap();
        let x_last = trace.inputs.last().unwrap();
        outer_add(&mut grad[lay.range(Block::FuseHidden)], &d_ag, h_last);
        outer_add(&mut grad[lay.range(Block::FuseInput)], &d_ag, x_last);
        for (g, d) in grad[lay.range(Block::FuseBias)].iter_mut().zip(&d_ag) {
            *g += d;
        }
        let mut dh = vec![0.0; h_dim];
        mat_t_vec_add(&p[lay.range(Block::FuseHidden)], &d_ag, &mut dh);

        for step in (0..trace.inputs.len()).rev() {
            let x = &trace.inputs[step];
            let h = &trace.hs[step];
            let z = &trace.zs[step];
            let r = &trace.rs[step];
            let n = &trace.ns[step];
            let u = &trace.us[step];

            let mut dh_prev = vec![0.0; h_dim];
            let mut da_n = vec![0.0; h_dim];
            let mut da_z = vec![0.0; h_dim];
            for i in 0..h_dim {
                let dn = dh[i] * (1.0 - z[i]);
                let dz = dh[i] * (h[i] - n[i]);
                dh_prev[i] = dh[i] * z[i];
                da_n[i] = dn * (1.0 - n[i] * n[i]);
                da_z[i] = dz * z[i] * (1.0 - z[i]);
            }
            let du: Vec<f64> = (0..h_dim).map(|i| da_n[i] * r[i]).collect();
            let da_r: Vec<f64> = (0..h_dim).map(|i| da_n[i] * u[i] * r[i] * (1.0 - r[i])).collect();

            outer_add(&mut grad[lay.range(Block::CandInput)], &da_n, x);
            outer_add(&mut grad[lay.range(Block::CandHidden)], &du, h);
            for (g, d) in grad[lay.range(Block::CandBias)].iter_mut().zip(&da_n) {
                *g += d;
            }
            mat_t_vec_add(&p[lay.range(Block::CandHidden)], &du, &mut dh_prev);

            outer_add(&mut grad[lay.range(Block::GateRInput)], &da_r, x);
            outer_add(&mut grad[lay.range(Block::GateRHidden)], &da_r, h);
            for (g, d) in grad[lay.range(Block::GateRBias)].iter_mut().zip(&da_r) {
                *g += d;
            }
            mat_t_vec_add(&p[lay.range(Block::GateRHidden)], &da_r, &mut dh_prev);

            outer_add(&mut grad[lay.range(Block::GateZInput)], &da_z, x);
            outer_add(&mut grad[lay.range(Block::GateZHidden)], &da_z, h);
            for (g, d) in grad[lay.range(Block::GateZBias)].iter_mut().zip(&da_z) {
                *g += d;
            }
            mat_t_vec_add(&p[lay.range(Block::GateZHidden)], &da_z, &mut dh_prev);

            dh = dh_prev;
        }
    }

    /// Fits the kinematic standardization to the frames of `windows`.
    pub fn fit_inputs<'a>(&mut self, windows: impl Iterator<Item = &'a StateWindow>) {
        let mut sum = [0.0; KINEMATIC_INPUTS];
        let mut sq = [0.0; KINEMATIC_INPUTS];
        let mut n = 0usize;
        for w in windows {
            for f in &w.frames {
                for i in 0..KINEMATIC_INPUTS {
                    sum[i] += f[i];
                    sq[i] += f[i] * f[i];
                }
                n += 1;
            }
        }
        if n == 0 {
            return;
        }
        for i in 0..KINEMATIC_INPUTS {
            let mean = sum[i] / n as f64;
            let var = (sq[i] / n as f64 - mean * mean).max(0.0);
            self.input_shift[i] = mean;
            self.input_scale[i] = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        }
    }
}
