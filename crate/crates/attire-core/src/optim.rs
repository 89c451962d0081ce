//! Optimizers and the learning-rate schedule.

use crate::grad::GradientSet;
use crate::model::ModelParams;

/// Optimizer selection with hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl OptimizerKind {
    /// Adam with the conventional defaults.
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// Linear decay to zero across the total step count, no warmup.
    LinearDecay,
}

/// Learning rate for step `step` of `total_steps` (0-based).
pub fn learning_rate(base: f64, schedule: Schedule, step: u64, total_steps: u64) -> f64 {
    match schedule {
        Schedule::Constant => base,
        Schedule::LinearDecay => {
            if step >= total_steps {
                0.0
            } else {
                base * (1.0 - step as f64 / total_steps as f64)
            }
        }
    }
}

/// Stateful optimizer over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    /// First and second moment estimates (Adam only).
    m: GradientSet,
    v: GradientSet,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        Optimizer {
            kind,
            m: GradientSet::zeros_like(params),
            v: GradientSet::zeros_like(params),
            step: 0,
        }
    }

    /// Apply one update in place.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &GradientSet, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for i in 0..params.num_params() {
                    let v = params.param_get(i) - lr * grads.flat_get(i);
                    params.param_set(i, v);
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                self.step += 1;
                let bc1 = 1.0 - libm::pow(beta1, self.step as f64);
                let bc2 = 1.0 - libm::pow(beta2, self.step as f64);
                for i in 0..params.num_params() {
                    let g = grads.flat_get(i);
                    let m = beta1 * self.m.flat_get(i) + (1.0 - beta1) * g;
                    let v = beta2 * self.v.flat_get(i) + (1.0 - beta2) * g * g;
                    self.m.flat_set(i, m);
                    self.v.flat_set(i, v);
                    let m_hat = m / bc1;
                    let v_hat = v / bc2;
                    let p = params.param_get(i) - lr * m_hat / (libm::sqrt(v_hat) + epsilon);
                    params.param_set(i, p);
                }
            }
        }
    }
}
