use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail;
use crate::math;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        OptimizerState { config, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected Adam update. Parameters are stored as `f32`; the
/// update itself is computed in `f64`.
pub fn adam_step(params: &mut [f32], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        bail!(
            Shape,
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        );
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        bail!(Training, "non-finite gradient at parameter {}", i);
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - math::pow(beta1, t);
    let c2 = 1.0 - math::pow(beta2, t);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = (*p as f64 - lr * m_hat / (math::sqrt(v_hat) + eps)) as f32;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5f32, -1.25, 3.0];
        let before = p.clone();
        let mut st = OptimizerState::new(3, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; bias-corrected m̂ = v̂ = 1, so the step is lr / (1 + eps).
        let mut p = vec![1.0f32];
        let mut st = OptimizerState::new(1, AdamConfig { lr: 0.1, ..AdamConfig::default() });
        adam_step(&mut p, &[1.0], &mut st).unwrap();
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p[0] as f64 - expect).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_is_training_error() {
        let mut p = vec![0.0f32; 2];
        let mut st = OptimizerState::new(2, AdamConfig::default());
        assert!(matches!(adam_step(&mut p, &[0.0, f64::NAN], &mut st), Err(crate::Error::Training(_))));
        assert!(matches!(adam_step(&mut p, &[0.0], &mut st), Err(crate::Error::Shape(_))));
    }
}
