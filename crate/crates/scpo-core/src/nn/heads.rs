//! Distribution heads on top of the dense networks: a diagonal Gaussian with
//! state-independent learnable log-stds, a categorical head for discrete
//! actions, and the `[0, 1]`-squashed safety-critic head whose random
//! initialization is pessimistic.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::mlp::{ForwardCache, Mlp};

const LN_2PI: f64 = 1.8378770664093453;

/// What a policy head emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous(d) => d,
        }
    }
}

/// A sampled action.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Standard normal sample via Box-Muller.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Policy network: an MLP body plus either a categorical head over its
/// logits or a diagonal Gaussian head over its means.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mlp: Mlp,
    /// State-independent log standard deviations; empty for discrete heads.
    pub log_std: Vec<f64>,
    pub space: ActionSpace,
}

/// Log-probability and entropy of one action, with everything needed to
/// backpropagate through them.
pub struct PolicyEval {
    pub log_prob: f64,
    pub entropy: f64,
    cache: ForwardCache,
    /// d log_prob / d network output.
    dlp_dout: Vec<f64>,
    /// d entropy / d network output.
    dent_dout: Vec<f64>,
    /// d log_prob / d log_std (Gaussian only).
    dlp_dlogstd: Vec<f64>,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, hidden: usize, space: ActionSpace, rng: &mut ChaCha8Rng) -> Self {
        let out = space.dim();
        // Small output gain keeps the initial policy near uniform.
        let mlp = Mlp::new(&[obs_dim, hidden, hidden, out], 0.01, rng);
        let log_std = match space {
            ActionSpace::Continuous(d) => vec![0.0; d],
            ActionSpace::Discrete(_) => Vec::new(),
        };
        Self {
            mlp,
            log_std,
            space,
        }
    }

    /// Samples an action and returns its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<(Action, f64)> {
        let out = self.mlp.forward(obs)?;
        match self.space {
            ActionSpace::Discrete(n) => {
                let probs = crate::policy::softmax(&out);
                let u: f64 = rng.random_range(0.0..1.0);
                let mut acc = 0.0;
                let mut choice = n - 1;
                for (i, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        choice = i;
                        break;
                    }
                }
                let lp = probs[choice].max(f64::MIN_POSITIVE).ln();
                Ok((Action::Discrete(choice), lp))
            }
            ActionSpace::Continuous(d) => {
                let mut a = Vec::with_capacity(d);
                let mut lp = 0.0;
                for i in 0..d {
                    let std = self.log_std[i].exp();
                    let eps = standard_normal(rng);
                    let x = out[i] + std * eps;
                    lp += -0.5 * eps * eps - self.log_std[i] - 0.5 * LN_2PI;
                    a.push(x);
                }
                Ok((Action::Continuous(a), lp))
            }
        }
    }

    /// Evaluates log-probability and entropy of `action` at `obs`, caching
    /// the forward pass and the head-level derivatives.
    pub fn evaluate(&self, obs: &[f64], action: &Action) -> Result<PolicyEval> {
        let cache = self.mlp.forward_cached(obs)?;
        let out = cache.output().to_vec();
        match (&self.space, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) => {
                if a >= n {
                    return Err(Error::InvalidConfig(format!("action {a} out of range")));
                }
                let probs = crate::policy::softmax(&out);
                let log_probs: Vec<f64> =
                    probs.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).collect();
                let entropy = -probs
                    .iter()
                    .zip(&log_probs)
                    .map(|(p, lp)| p * lp)
                    .sum::<f64>();
                let mut dlp_dout: Vec<f64> = probs.iter().map(|p| -p).collect();
                dlp_dout[*a] += 1.0;
                let dent_dout: Vec<f64> = probs
                    .iter()
                    .zip(&log_probs)
                    .map(|(p, lp)| -p * (lp + entropy))
                    .collect();
                Ok(PolicyEval {
                    log_prob: log_probs[*a],
                    entropy,
                    cache,
                    dlp_dout,
                    dent_dout,
                    dlp_dlogstd: Vec::new(),
                })
            }
            (ActionSpace::Continuous(d), Action::Continuous(a)) => {
                if a.len() != *d {
                    return Err(Error::DimensionMismatch {
                        expected: *d,
                        got: a.len(),
                    });
                }
                let mut log_prob = 0.0;
                let mut entropy = 0.0;
                let mut dlp_dout = Vec::with_capacity(*d);
                let mut dlp_dlogstd = Vec::with_capacity(*d);
                for i in 0..*d {
                    let std = self.log_std[i].exp();
                    let z = (a[i] - out[i]) / std;
                    log_prob += -0.5 * z * z - self.log_std[i] - 0.5 * LN_2PI;
                    entropy += self.log_std[i] + 0.5 * (LN_2PI + 1.0);
                    dlp_dout.push(z / std);
                    dlp_dlogstd.push(z * z - 1.0);
                }
                Ok(PolicyEval {
                    log_prob,
                    entropy,
                    cache,
                    dlp_dout,
                    // Entropy does not depend on the mean.
                    dent_dout: vec![0.0; *d],
                    dlp_dlogstd,
                })
            }
            _ => Err(Error::InvalidConfig(
                "action kind does not match the policy head".into(),
            )),
        }
    }

    /// Accumulates gradients of `w_lp * log_prob + w_ent * entropy` into
    /// `mlp_grads` (flat, like `mlp.params`) and `log_std_grads`.
    pub fn backward(
        &self,
        eval: &PolicyEval,
        w_lp: f64,
        w_ent: f64,
        mlp_grads: &mut [f64],
        log_std_grads: &mut [f64],
    ) -> Result<()> {
        let upstream: Vec<f64> = eval
            .dlp_dout
            .iter()
            .zip(&eval.dent_dout)
            .map(|(lp, ent)| w_lp * lp + w_ent * ent)
            .collect();
        self.mlp.backward(&eval.cache, &upstream, mlp_grads)?;
        for (g, d) in log_std_grads.iter_mut().zip(&eval.dlp_dlogstd) {
            // Gaussian entropy is log_std plus a constant per dimension.
            *g += w_lp * d + w_ent;
        }
        Ok(())
    }
}

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub mlp: Mlp,
}

impl ValueNet {
    pub fn new(obs_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            mlp: Mlp::new(&[obs_dim, hidden, hidden, 1], 1.0, rng),
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.mlp.forward(obs)?[0])
    }

    /// Accumulates the gradient of `0.5 * (v - target)^2`.
    pub fn backward_mse(&self, obs: &[f64], target: f64, grads: &mut [f64]) -> Result<f64> {
        let cache = self.mlp.forward_cached(obs)?;
        let v = cache.output()[0];
        self.mlp.backward(&cache, &[v - target], grads)?;
        Ok(0.5 * (v - target) * (v - target))
    }
}

/// Safety critic: scalar output squashed by `max(tanh(x), 0)`, so the value
/// lives in `[0, 1]` and a freshly initialized network predicts close to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyCriticNet {
    pub mlp: Mlp,
}

/// `max(tanh(x), 0)` and its derivative; the clipped region is flat.
pub fn squash_safety(x: f64) -> (f64, f64) {
    let t = x.tanh();
    if t > 0.0 {
        (t, 1.0 - t * t)
    } else {
        (0.0, 0.0)
    }
}

impl SafetyCriticNet {
    pub fn new(obs_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        // Small output gain keeps the raw output near zero at initialization,
        // which the squash maps to a pessimistic safety estimate.
        Self {
            mlp: Mlp::new(&[obs_dim, hidden, hidden, 1], 0.01, rng),
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(squash_safety(self.mlp.forward(obs)?[0]).0)
    }

    /// Accumulates the gradient of `0.5 * (v - target)^2` through the squash.
    pub fn backward_mse(&self, obs: &[f64], target: f64, grads: &mut [f64]) -> Result<f64> {
        let cache = self.mlp.forward_cached(obs)?;
        let (v, dv) = squash_safety(cache.output()[0]);
        self.mlp.backward(&cache, &[(v - target) * dv], grads)?;
        Ok(0.5 * (v - target) * (v - target))
    }

    /// Forces the critic to output exactly 1 everywhere by saturating the
    /// output bias deep into the positive tanh region.
    pub fn saturate_to_one(&mut self) {
        let n = self.mlp.params.len();
        let out_weights = self.mlp.dims[self.mlp.dims.len() - 2];
        for p in &mut self.mlp.params[n - out_weights - 1..] {
            *p = 0.0;
        }
        self.mlp.params[n - 1] = 40.0;
    }
}
