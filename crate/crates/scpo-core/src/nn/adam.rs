//! Adam with bias correction over flat parameter vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// Hyperparameters; the conventional defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update in place. Rejects non-finite gradients, naming the first
/// offending index.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NumericAbort(format!(
            "non-finite gradient {} at parameter {i} (step {})",
            grads[i], state.step
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![1.0, -2.0, 0.5];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.0; 3], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        for _ in 0..100 {
            adam_step(&mut params, &[3.0], &mut state, &AdamConfig::default()).unwrap();
        }
        assert!(params[0] < 0.0);
    }

    #[test]
    fn quadratic_bowl_reaches_small_radius() {
        // Minimize x^2 from 0.1 at the default learning rate; crosses 1e-3
        // around step 1170 and keeps shrinking.
        let mut params = vec![0.1];
        let mut state = AdamState::new(1);
        let cfg = AdamConfig::default();
        for _ in 0..2000 {
            let grad = 2.0 * params[0];
            adam_step(&mut params, &[grad], &mut state, &cfg).unwrap();
        }
        assert!(params[0].abs() < 1e-3, "ended at {}", params[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_diagnostics() {
        let mut params = vec![0.0, 0.0];
        let mut state = AdamState::new(2);
        let err = adam_step(
            &mut params,
            &[0.0, f64::NAN],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("parameter 1"));
    }
}
