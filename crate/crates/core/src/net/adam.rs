//! Adam with bias correction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(parameters: usize) -> Self {
        AdamState {
            m: vec![0.0; parameters],
            v: vec![0.0; parameters],
            step: 0,
        }
    }
}

/// One optimizer step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    assert_eq!(params.len(), grad.len(), "gradient length differs from parameters");
    assert_eq!(params.len(), state.m.len(), "optimizer state length differs from parameters");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
