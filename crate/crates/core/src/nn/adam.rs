use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::backprop::Gradients;
use super::mlp::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment estimates for every parameter of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    /// First moments, shaped like the network.
    pub m: Gradients,
    /// Second moments, shaped like the network.
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(mlp),
            v: Gradients::zeros_like(mlp),
            t: 0,
        }
    }
}

#[inline]
fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One bias-corrected Adam update. Frozen layers keep both their parameters
/// and their moment buffers unchanged.
pub fn adam_step(mlp: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !grads.matches(mlp) || !state.m.matches(mlp) || !state.v.matches(mlp) {
        return Err(Error::Shape(
            "gradients or optimizer state do not match the network".into(),
        ));
    }
    state.t += 1;
    let cfg = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for l in 0..mlp.depth() {
        if mlp.is_frozen(l) {
            continue;
        }
        let g = &grads.layers[l];
        let m = &mut state.m.layers[l];
        let v = &mut state.v.layers[l];
        let layer = mlp.layer_mut(l);
        update(
            layer.weights.as_mut_slice(),
            g.weights.as_slice(),
            m.weights.as_mut_slice(),
            v.weights.as_mut_slice(),
            &cfg,
            bc1,
            bc2,
        );
        update(
            &mut layer.bias,
            &g.bias,
            &mut m.bias,
            &mut v.bias,
            &cfg,
            bc1,
            bc2,
        );
    }
    Ok(())
}
