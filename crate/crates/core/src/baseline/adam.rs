use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> AdamState {
        AdamState {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(state: &mut AdamState, grads: &[f64], params: &mut [f64]) -> Result<()> {
    if grads.len() != state.m.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "state {}, gradient {}, parameters {}",
            state.m.len(),
            grads.len(),
            params.len()
        )));
    }
    let c = state.config;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= c.alpha * mh / (vh.sqrt() + c.eps);
    }
    Ok(())
}
