//! Training configuration and the per-task default table.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::KPower;

/// Which objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Safety-critic reward cancellation with the cost term.
    Scpo,
    /// Fixed-multiplier penalty `r + b - beta * c`, bypassing the critic.
    Lagrangian,
    /// Plain clipped policy optimization on `r + b`.
    Unconstrained,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scpo" => Ok(Mode::Scpo),
            "lagrangian" => Ok(Mode::Lagrangian),
            "unconstrained" => Ok(Mode::Unconstrained),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Scpo => "scpo",
            Mode::Lagrangian => "lagrangian",
            Mode::Unconstrained => "unconstrained",
        })
    }
}

/// Which clipped surrogate the policy update uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorChoice {
    /// `ratio - 1`, clipped.
    L1,
    /// `1 - 1/ratio`, clipped.
    L2,
}

/// Everything a training run depends on. Serializes to the run-config file
/// field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub run_id: String,
    pub env: String,
    pub mode: Mode,
    /// Exponent on the safety critic inside the reward transform.
    pub k: KPower,
    /// Cost-term weight.
    pub beta: f64,
    /// Bias added to raw rewards so they are nonnegative.
    pub reward_bias_b: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub batch_size: usize,
    pub epochs_per_iter: usize,
    /// Environment steps collected per iteration (rounded up to whole
    /// episodes).
    pub timesteps: usize,
    pub iterations: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub safety_gamma: f64,
    pub learning_rate: f64,
    pub estimator: EstimatorChoice,
    pub seed: u64,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    /// Normalize advantages to zero mean and unit variance per batch.
    #[serde(default = "default_true")]
    pub advantage_norm: bool,
    /// Checkpoint every N iterations; 0 keeps only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Append the clipped cumulative cost to observations.
    #[serde(default = "default_true")]
    pub augment_obs: bool,
    /// Flat per-environment parameter overrides.
    #[serde(default)]
    pub env_params: HashMap<String, f64>,
}

fn default_hidden_dim() -> usize {
    64
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// Published per-task defaults; the run length is the caller's choice.
    pub fn table_defaults(env: &str) -> Result<Self> {
        let (entropy_coef, reward_bias_b, k, beta) = match env {
            "point_circle" => (0.01, 1.5, KPower::Finite(2), 0.0),
            "gather_grid" => (0.01, 0.05, KPower::Finite(4), 15.0),
            "point_run" => (0.005, 1.0, KPower::Finite(4), 0.5),
            "cart_safe" => (0.001, 0.0, KPower::Finite(5), 3.0),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "no default hyperparameters for `{other}`"
                )))
            }
        };
        Ok(Self {
            run_id: format!("{env}-default"),
            env: env.to_string(),
            mode: Mode::Scpo,
            k,
            beta,
            reward_bias_b,
            clip_epsilon: 0.2,
            entropy_coef,
            batch_size: 64,
            epochs_per_iter: 5,
            timesteps: 32_768,
            iterations: 100,
            gamma: 0.99,
            gae_lambda: 0.95,
            safety_gamma: 0.995,
            learning_rate: 2e-4,
            estimator: EstimatorChoice::L1,
            seed: 0,
            hidden_dim: 64,
            advantage_norm: true,
            checkpoint_every: 0,
            augment_obs: true,
            env_params: HashMap::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        check(!self.run_id.is_empty(), "run_id must not be empty")?;
        check(self.clip_epsilon > 0.0, "clip_epsilon must be > 0")?;
        check(self.beta >= 0.0, "beta must be >= 0")?;
        check(self.reward_bias_b >= 0.0, "reward_bias_b must be >= 0")?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(
            self.batch_size <= self.timesteps,
            "batch_size must not exceed timesteps",
        )?;
        check(self.epochs_per_iter >= 1, "epochs_per_iter must be >= 1")?;
        check(self.iterations >= 1, "iterations must be >= 1")?;
        check(
            self.gamma > 0.0 && self.gamma <= 1.0,
            "gamma must be in (0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.gae_lambda),
            "gae_lambda must be in [0, 1]",
        )?;
        check(
            self.safety_gamma > 0.0 && self.safety_gamma <= 1.0,
            "safety_gamma must be in (0, 1]",
        )?;
        check(self.learning_rate > 0.0, "learning_rate must be > 0")?;
        check(self.hidden_dim >= 1, "hidden_dim must be >= 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults_exist_for_every_environment() {
        for env in crate::envs::ENV_NAMES {
            let cfg = TrainConfig::table_defaults(env).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.batch_size, 64);
            assert_eq!(cfg.epochs_per_iter, 5);
            assert_eq!(cfg.timesteps, 32_768);
            assert_eq!(cfg.learning_rate, 2e-4);
            assert_eq!(cfg.safety_gamma, 0.995);
        }
        let run = TrainConfig::table_defaults("point_run").unwrap();
        assert_eq!(run.k, KPower::Finite(4));
        assert_eq!(run.beta, 0.5);
        assert_eq!(run.reward_bias_b, 1.0);
        assert_eq!(run.entropy_coef, 0.005);
        assert!(TrainConfig::table_defaults("nope").is_err());
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut cfg = TrainConfig::table_defaults("cart_safe").unwrap();
        cfg.clip_epsilon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::table_defaults("cart_safe").unwrap();
        cfg.batch_size = cfg.timesteps + 1;
        assert!(cfg.validate().is_err());
    }
}
