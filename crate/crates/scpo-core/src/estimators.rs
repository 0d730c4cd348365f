//! Sample-based estimators used during training: discounted safety-value
//! targets, n-step safety Q estimates, and generalized advantage estimation.

use crate::error::{Error, Result};

/// Estimator hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Discount for the safety-value targets, in `(0, 1]`.
    pub safety_gamma: f64,
    /// Discount for advantage estimation, in `(0, 1]`.
    pub gae_gamma: f64,
    /// Advantage interpolation factor, in `[0, 1]`.
    pub gae_lambda: f64,
    /// Weights over n-step safety Q estimates; nonnegative, summing to one.
    /// `nstep_weights[i]` weights the `(i + 1)`-step estimate.
    pub nstep_weights: Vec<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            safety_gamma: 0.995,
            gae_gamma: 0.99,
            gae_lambda: 0.95,
            nstep_weights: vec![1.0],
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.safety_gamma > 0.0 && self.safety_gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "safety_gamma must be in (0, 1], got {}",
                self.safety_gamma
            )));
        }
        if !(self.gae_gamma > 0.0 && self.gae_gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gae_gamma must be in (0, 1], got {}",
                self.gae_gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidConfig(format!(
                "gae_lambda must be in [0, 1], got {}",
                self.gae_lambda
            )));
        }
        if self.nstep_weights.is_empty()
            || self.nstep_weights.iter().any(|&w| w < 0.0)
            || (self.nstep_weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidConfig(
                "nstep_weights must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_flags_monotone(flags: &[bool]) -> Result<()> {
    let mut seen_unsafe = false;
    for &f in flags {
        if seen_unsafe && f {
            return Err(Error::InvalidTrajectory(
                "safety flags are not nonincreasing".into(),
            ));
        }
        seen_unsafe |= !f;
    }
    Ok(())
}

/// Discounted safety-value targets from a flag sequence.
///
/// Backward recursion: the last target is the last flag, and
/// `target_t = (1 - gamma) flag_t + gamma target_{t+1}`. With monotone flags
/// every output lies in `[0, 1]`, and an all-safe episode gives exactly 1.
pub fn vc_gamma_targets(flags: &[bool], safety_gamma: f64) -> Result<Vec<f64>> {
    if flags.is_empty() {
        return Err(Error::InvalidTrajectory("empty flag sequence".into()));
    }
    if !(safety_gamma > 0.0 && safety_gamma <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "safety_gamma must be in (0, 1], got {safety_gamma}"
        )));
    }
    check_flags_monotone(flags)?;
    let t_len = flags.len();
    let mut out = vec![0.0; t_len];
    out[t_len - 1] = if flags[t_len - 1] { 1.0 } else { 0.0 };
    for t in (0..t_len - 1).rev() {
        let f = if flags[t] { 1.0 } else { 0.0 };
        out[t] = (1.0 - safety_gamma) * f + safety_gamma * out[t + 1];
    }
    Ok(out)
}

/// Weighted n-step safety Q estimates along one episode.
///
/// The k-step estimate at time `t` is `flag_{t+k-1} * vc_values[t+k]`; when
/// `t + k` runs past the final step it truncates to the episode's flag
/// product, which for monotone flags is the final flag.
pub fn nstep_qc_estimate(
    flags: &[bool],
    vc_values: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if flags.len() != vc_values.len() {
        return Err(Error::DimensionMismatch {
            expected: flags.len(),
            got: vc_values.len(),
        });
    }
    if flags.is_empty() {
        return Err(Error::InvalidTrajectory("empty episode".into()));
    }
    check_flags_monotone(flags)?;
    let t_len = flags.len();
    let tail_flag = if flags[t_len - 1] { 1.0 } else { 0.0 };
    let mut out = vec![0.0; t_len];
    for t in 0..t_len {
        let mut acc = 0.0;
        for (i, &w) in cfg.nstep_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let k = i + 1;
            let est = if t + k < t_len {
                let f = if flags[t + k - 1] { 1.0 } else { 0.0 };
                f * vc_values[t + k]
            } else {
                tail_flag
            };
            acc += w * est;
        }
        out[t] = acc;
    }
    Ok(out)
}

/// Generalized advantage estimation over one episode.
///
/// `values` must hold one entry per step plus a bootstrap slot for the state
/// after the last step (zero at termination). With `lambda = 0` this reduces
/// to one-step residuals; with `lambda = 1` to discounted returns minus
/// values.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: rewards.len() + 1,
            got: values.len(),
        });
    }
    let t_len = rewards.len();
    let mut out = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}
