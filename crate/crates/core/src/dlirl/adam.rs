use serde::{Deserialize, Serialize};

/// Adam with bias-corrected moments:
///
/// ```text
/// m_t = b1 m_{t-1} + (1 - b1) g        m^ = m_t / (1 - b1^t)
/// v_t = b2 v_{t-1} + (1 - b2) g^2      v^ = v_t / (1 - b2^t)
/// p_t = p_{t-1} - lr * m^ / (sqrt(v^) + eps)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, len: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Bias-corrected first moment.
    pub fn m_hat(&self) -> Vec<f64> {
        let c = 1.0 - self.beta1.powi(self.step as i32);
        self.m.iter().map(|m| m / c).collect()
    }

    /// Bias-corrected second moment.
    pub fn v_hat(&self) -> Vec<f64> {
        let c = 1.0 - self.beta2.powi(self.step as i32);
        self.v.iter().map(|v| v / c).collect()
    }

    /// Applies one update in place and returns the Euclidean norm of the
    /// parameter change.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> f64 {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut norm = 0.0;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let delta = self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            params[i] -= delta;
            norm += delta * delta;
        }
        norm.sqrt()
    }
}
