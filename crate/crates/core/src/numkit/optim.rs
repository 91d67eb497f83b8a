use serde::{Deserialize, Serialize};

use super::{Matrix, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `θ ← θ - lr · decay · θ`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step
/// and keyed by parameter position.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M, lr: f64) {
        let params = model.params_mut();
        if self.m.len() != params.len() {
            self.m = params
                .iter()
                .map(|p| Matrix::zeros(p.value.raw_dim()))
                .collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                    *w -= lr * update + lr * weight_decay * *w;
                });
        }
    }
}

/// SGD with heavy-ball momentum and coupled L2 regularization
/// (`g ← g + l2 · θ`).
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub momentum: f64,
    pub l2: f64,
    velocity: Vec<Matrix>,
}

impl SgdMomentum {
    pub fn new(momentum: f64, l2: f64) -> Self {
        Self {
            momentum,
            l2,
            velocity: Vec::new(),
        }
    }

    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M, lr: f64) {
        let params = model.params_mut();
        if self.velocity.len() != params.len() {
            self.velocity = params
                .iter()
                .map(|p| Matrix::zeros(p.value.raw_dim()))
                .collect();
        }
        let (mu, l2) = (self.momentum, self.l2);
        for (p, vel) in params.into_iter().zip(&mut self.velocity) {
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(vel)
                .for_each(|w, &g, vel| {
                    *vel = mu * *vel + g + l2 * *w;
                    *w -= lr * *vel;
                });
        }
    }
}
