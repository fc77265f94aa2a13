//! Parameter update rules: Adam with bias correction, and plain SGD.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::store::{Gradients, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam moment decay rates and denominator offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(store: &ParamStore) -> Self {
        AdamState {
            m: store.entries().iter().map(|(_, a)| ArrayD::zeros(a.raw_dim())).collect(),
            v: store.entries().iter().map(|(_, a)| ArrayD::zeros(a.raw_dim())).collect(),
            t: 0,
        }
    }
}

/// One Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
/// The step counter increments once per call.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
    cfg: &AdamConfig,
) {
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for ((param, grad), (m, v)) in store
        .arrays_mut()
        .zip(&grads.0)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        ndarray::Zip::from(param)
            .and(grad)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            });
    }
}

/// One plain SGD update: `theta <- theta - lr * g`.
pub fn sgd_step(store: &mut ParamStore, grads: &Gradients, learning_rate: f64) {
    for (param, grad) in store.arrays_mut().zip(&grads.0) {
        ndarray::Zip::from(param).and(grad).for_each(|p, &g| {
            *p -= learning_rate * g;
        });
    }
}
