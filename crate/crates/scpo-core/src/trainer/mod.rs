//! The training loop: collect rollouts under the current policy, estimate
//! per-step safety with the critic, transform rewards so unsafe gains cancel,
//! then run clipped-surrogate policy updates and critic regressions.

mod config;

pub use config::{EstimatorChoice, Mode, TrainConfig};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cmdp::{q_clip, safety_flag};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::estimators::{gae_advantages, nstep_qc_estimate, vc_gamma_targets, EstimatorConfig};
use crate::nn::{
    adam_step, Action, ActionSpace, AdamConfig, AdamState, Checkpoint, PolicyNet, SafetyCriticNet,
    ValueNet,
};
use crate::oracle::KPower;

/// Per-iteration aggregate statistics, one CSV row each.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Cumulative environment steps after this iteration.
    pub env_steps: u64,
    pub mean_return: f64,
    pub mean_cost: f64,
    pub cost_std: f64,
    pub vc_loss: f64,
    pub value_loss: f64,
    pub surrogate_loss: f64,
    pub entropy: f64,
}

/// Transformed per-step rewards.
///
/// The safety-cancelling mode computes
/// `(r + b) qhat^k - beta (1 - qhat^k) c`; the fixed-multiplier mode
/// `(r + b) - beta c`; the unconstrained mode `r + b`. Rejects a step whose
/// biased reward is negative, naming it.
pub fn transform_rewards(
    rewards: &[f64],
    costs: &[f64],
    qhat: &[f64],
    mode: Mode,
    k: KPower,
    beta: f64,
    bias: f64,
) -> Result<Vec<f64>> {
    if rewards.len() != costs.len() || (mode == Mode::Scpo && qhat.len() != rewards.len()) {
        return Err(Error::DimensionMismatch {
            expected: rewards.len(),
            got: costs.len().min(qhat.len()),
        });
    }
    rewards
        .iter()
        .enumerate()
        .map(|(t, &r)| {
            let biased = r + bias;
            if biased < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "biased reward {biased} < 0 at step {t}; raise reward_bias_b"
                )));
            }
            Ok(match mode {
                Mode::Scpo => {
                    let pow = k.apply(qhat[t]);
                    biased * pow - beta * (1.0 - pow) * costs[t]
                }
                Mode::Lagrangian => biased - beta * costs[t],
                Mode::Unconstrained => biased,
            })
        })
        .collect()
}

/// Clipped surrogate term for one sample: the objective value and its
/// derivative with respect to the new log-probability. The clipped branch
/// contributes zero gradient.
pub fn surrogate_term(
    estimator: EstimatorChoice,
    old_log_prob: f64,
    new_log_prob: f64,
    advantage: f64,
    clip_epsilon: f64,
) -> (f64, f64) {
    let ratio = (new_log_prob - old_log_prob).exp();
    let (r, dr_dlp) = match estimator {
        EstimatorChoice::L1 => (ratio - 1.0, ratio),
        EstimatorChoice::L2 => (1.0 - 1.0 / ratio, 1.0 / ratio),
    };
    let clipped = r.clamp(-clip_epsilon, clip_epsilon);
    if r * advantage <= clipped * advantage {
        (r * advantage, advantage * dr_dlp)
    } else {
        (clipped * advantage, 0.0)
    }
}

/// Scalar clipped-surrogate loss over a batch (negated objective, plus the
/// entropy bonus), as optimized by the trainer.
pub fn surrogate_loss(
    estimator: EstimatorChoice,
    clip_epsilon: f64,
    entropy_coef: f64,
    old_log_probs: &[f64],
    new_log_probs: &[f64],
    advantages: &[f64],
    entropies: &[f64],
) -> f64 {
    let n = old_log_probs.len() as f64;
    let mut acc = 0.0;
    for i in 0..old_log_probs.len() {
        let (obj, _) = surrogate_term(
            estimator,
            old_log_probs[i],
            new_log_probs[i],
            advantages[i],
            clip_epsilon,
        );
        acc += -obj - entropy_coef * entropies[i];
    }
    acc / n
}

/// One completed episode of experience.
struct EpisodeData {
    obs: Vec<Vec<f64>>,
    actions: Vec<Action>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    costs: Vec<f64>,
    flags: Vec<bool>,
}

impl EpisodeData {
    fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

/// Flat training sample after advantage estimation.
struct Sample {
    episode: usize,
    t: usize,
    advantage: f64,
    value_target: f64,
    safety_target: f64,
}

/// Owns the networks, optimizer state and RNG stream for one training run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub env: Box<dyn Env>,
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub safety: SafetyCriticNet,
    opt_policy: AdamState,
    opt_log_std: AdamState,
    opt_value: AdamState,
    opt_safety: AdamState,
    rng: ChaCha8Rng,
    pub iteration: usize,
    pub env_steps: u64,
}

impl Trainer {
    /// Builds the environment named by the config and wires everything up.
    pub fn from_config(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut env_params = cfg.env_params.clone();
        env_params
            .entry("augment".to_string())
            .or_insert(if cfg.augment_obs { 1.0 } else { 0.0 });
        let env = crate::envs::make_env(&cfg.env, &env_params)?;
        Self::with_env(cfg, env)
    }

    /// Uses a caller-supplied environment (tabular adapters, tests).
    pub fn with_env(cfg: TrainConfig, env: Box<dyn Env>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let obs_dim = env.obs_dim();
        let policy = PolicyNet::new(obs_dim, cfg.hidden_dim, env.action_space(), &mut rng);
        let value = ValueNet::new(obs_dim, cfg.hidden_dim, &mut rng);
        let safety = SafetyCriticNet::new(obs_dim, cfg.hidden_dim, &mut rng);
        Ok(Self {
            opt_policy: AdamState::new(policy.mlp.params.len()),
            opt_log_std: AdamState::new(policy.log_std.len()),
            opt_value: AdamState::new(value.mlp.params.len()),
            opt_safety: AdamState::new(safety.mlp.params.len()),
            cfg,
            env,
            policy,
            value,
            safety,
            rng,
            iteration: 0,
            env_steps: 0,
        })
    }

    fn collect_episode(&mut self) -> Result<EpisodeData> {
        let mut obs = Vec::new();
        let mut actions = Vec::new();
        let mut log_probs = Vec::new();
        let mut rewards = Vec::new();
        let mut costs = Vec::new();
        let mut current = self.env.reset(&mut self.rng);
        for _ in 0..self.env.horizon() {
            let (action, lp) = self.policy.sample(&current, &mut self.rng)?;
            let out = self.env.step(&action)?;
            obs.push(current);
            actions.push(action);
            log_probs.push(lp);
            rewards.push(out.reward);
            costs.push(out.cost);
            current = out.obs;
            if out.done {
                break;
            }
        }
        let limit = self.env.cost_limit();
        let delta = crate::cmdp::DEFAULT_DELTA;
        let mut q = 0.0;
        let flags = costs
            .iter()
            .map(|&c| {
                q += c;
                safety_flag(q_clip(q, limit, delta))
            })
            .collect();
        Ok(EpisodeData {
            obs,
            actions,
            log_probs,
            rewards,
            costs,
            flags,
        })
    }

    /// Runs one outer loop: collect at least `timesteps` steps of whole
    /// episodes, estimate targets, then `epochs_per_iter` passes of
    /// shuffled minibatch updates.
    pub fn train_iteration(&mut self) -> Result<IterationMetrics> {
        let mut episodes = Vec::new();
        let mut steps = 0;
        while steps < self.cfg.timesteps {
            let ep = self.collect_episode()?;
            steps += ep.obs.len();
            episodes.push(ep);
        }
        self.env_steps += steps as u64;

        // Per-episode target construction with the current critics.
        let est_cfg = EstimatorConfig {
            safety_gamma: self.cfg.safety_gamma,
            gae_gamma: self.cfg.gamma,
            gae_lambda: self.cfg.gae_lambda,
            nstep_weights: vec![1.0],
        };
        let mut samples = Vec::with_capacity(steps);
        for (idx, ep) in episodes.iter().enumerate() {
            let vc_net: Vec<f64> = ep
                .obs
                .iter()
                .map(|o| self.safety.value(o))
                .collect::<Result<_>>()?;
            let qhat = nstep_qc_estimate(&ep.flags, &vc_net, &est_cfg)?;
            let transformed = transform_rewards(
                &ep.rewards,
                &ep.costs,
                &qhat,
                self.cfg.mode,
                self.cfg.k,
                self.cfg.beta,
                self.cfg.reward_bias_b,
            )?;
            let mut values: Vec<f64> = ep
                .obs
                .iter()
                .map(|o| self.value.value(o))
                .collect::<Result<_>>()?;
            values.push(0.0); // episodic: no bootstrap past the end
            let advantages =
                gae_advantages(&transformed, &values, self.cfg.gamma, self.cfg.gae_lambda)?;
            let safety_targets = vc_gamma_targets(&ep.flags, self.cfg.safety_gamma)?;
            for t in 0..ep.obs.len() {
                samples.push(Sample {
                    episode: idx,
                    t,
                    advantage: advantages[t],
                    value_target: advantages[t] + values[t],
                    safety_target: safety_targets[t],
                });
            }
        }

        if self.cfg.advantage_norm {
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
            let var = samples
                .iter()
                .map(|s| (s.advantage - mean) * (s.advantage - mean))
                .sum::<f64>()
                / n;
            let std = var.sqrt() + 1e-8;
            for s in &mut samples {
                s.advantage = (s.advantage - mean) / std;
            }
        }

        // Minibatch optimization.
        let adam = AdamConfig {
            lr: self.cfg.learning_rate,
            ..Default::default()
        };
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut policy_grads = vec![0.0; self.policy.mlp.params.len()];
        let mut log_std_grads = vec![0.0; self.policy.log_std.len()];
        let mut value_grads = vec![0.0; self.value.mlp.params.len()];
        let mut safety_grads = vec![0.0; self.safety.mlp.params.len()];
        let mut surrogate_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut value_loss_sum = 0.0;
        let mut safety_loss_sum = 0.0;
        let mut n_updates = 0.0;

        for _ in 0..self.cfg.epochs_per_iter {
            // Fisher-Yates shuffle from the run's RNG stream.
            for i in (1..order.len()).rev() {
                let j = self.rng.random_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(self.cfg.batch_size) {
                policy_grads.fill(0.0);
                log_std_grads.fill(0.0);
                value_grads.fill(0.0);
                safety_grads.fill(0.0);
                let inv_n = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let s = &samples[i];
                    let ep = &episodes[s.episode];
                    let obs = &ep.obs[s.t];
                    let eval = self.policy.evaluate(obs, &ep.actions[s.t])?;
                    if !eval.log_prob.is_finite() {
                        return Err(Error::NumericAbort(format!(
                            "non-finite log-probability at iteration {}",
                            self.iteration
                        )));
                    }
                    let (obj, dobj_dlp) = surrogate_term(
                        self.cfg.estimator,
                        ep.log_probs[s.t],
                        eval.log_prob,
                        s.advantage,
                        self.cfg.clip_epsilon,
                    );
                    surrogate_sum += -obj - self.cfg.entropy_coef * eval.entropy;
                    entropy_sum += eval.entropy;
                    n_updates += 1.0;
                    // Loss is the negated objective minus the entropy bonus.
                    self.policy.backward(
                        &eval,
                        -dobj_dlp,
                        -self.cfg.entropy_coef,
                        &mut policy_grads,
                        &mut log_std_grads,
                    )?;
                    value_loss_sum += self.value.backward_mse(obs, s.value_target, &mut value_grads)?;
                    safety_loss_sum +=
                        self.safety
                            .backward_mse(obs, s.safety_target, &mut safety_grads)?;
                }
                for g in policy_grads
                    .iter_mut()
                    .chain(&mut log_std_grads)
                    .chain(&mut value_grads)
                    .chain(&mut safety_grads)
                {
                    *g *= inv_n;
                }
                adam_step(
                    &mut self.policy.mlp.params,
                    &policy_grads,
                    &mut self.opt_policy,
                    &adam,
                )?;
                adam_step(
                    &mut self.policy.log_std,
                    &log_std_grads,
                    &mut self.opt_log_std,
                    &adam,
                )?;
                adam_step(&mut self.value.mlp.params, &value_grads, &mut self.opt_value, &adam)?;
                adam_step(
                    &mut self.safety.mlp.params,
                    &safety_grads,
                    &mut self.opt_safety,
                    &adam,
                )?;
            }
        }

        self.iteration += 1;
        let n_eps = episodes.len() as f64;
        let mean_return = episodes.iter().map(|e| e.total_reward()).sum::<f64>() / n_eps;
        let mean_cost = episodes.iter().map(|e| e.total_cost()).sum::<f64>() / n_eps;
        let cost_var = episodes
            .iter()
            .map(|e| (e.total_cost() - mean_cost).powi(2))
            .sum::<f64>()
            / n_eps;
        let metrics = IterationMetrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return,
            mean_cost,
            cost_std: cost_var.sqrt(),
            vc_loss: safety_loss_sum / n_updates,
            value_loss: value_loss_sum / n_updates,
            surrogate_loss: surrogate_sum / n_updates,
            entropy: entropy_sum / n_updates,
        };
        for v in [
            metrics.mean_return,
            metrics.mean_cost,
            metrics.vc_loss,
            metrics.value_loss,
            metrics.surrogate_loss,
            metrics.entropy,
        ] {
            if !v.is_finite() {
                return Err(Error::NumericAbort(format!(
                    "non-finite metric at iteration {}",
                    self.iteration
                )));
            }
        }
        Ok(metrics)
    }

    /// Serializes every network and optimizer state.
    pub fn checkpoint(&self) -> Checkpoint {
        let space = match self.env.action_space() {
            ActionSpace::Discrete(n) => format!("discrete:{n}"),
            ActionSpace::Continuous(d) => format!("continuous:{d}"),
        };
        Checkpoint {
            meta: vec![
                ("env".into(), self.env.name().to_string()),
                ("action_space".into(), space),
                ("obs_dim".into(), self.env.obs_dim().to_string()),
                ("hidden_dim".into(), self.cfg.hidden_dim.to_string()),
                ("mode".into(), self.cfg.mode.to_string()),
                ("iteration".into(), self.iteration.to_string()),
                ("env_steps".into(), self.env_steps.to_string()),
                ("seed".into(), self.cfg.seed.to_string()),
            ],
            tensors: vec![
                ("policy.mlp".into(), self.policy.mlp.params.clone()),
                ("policy.log_std".into(), self.policy.log_std.clone()),
                ("value.mlp".into(), self.value.mlp.params.clone()),
                ("safety.mlp".into(), self.safety.mlp.params.clone()),
                ("adam.policy.m".into(), self.opt_policy.m.clone()),
                ("adam.policy.v".into(), self.opt_policy.v.clone()),
                ("adam.log_std.m".into(), self.opt_log_std.m.clone()),
                ("adam.log_std.v".into(), self.opt_log_std.v.clone()),
                ("adam.value.m".into(), self.opt_value.m.clone()),
                ("adam.value.v".into(), self.opt_value.v.clone()),
                ("adam.safety.m".into(), self.opt_safety.m.clone()),
                ("adam.safety.v".into(), self.opt_safety.v.clone()),
                (
                    "adam.steps".into(),
                    vec![
                        self.opt_policy.step as f64,
                        self.opt_log_std.step as f64,
                        self.opt_value.step as f64,
                        self.opt_safety.step as f64,
                    ],
                ),
            ],
        }
    }

    /// Restores networks and optimizer state from a checkpoint.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let expect = |name: &str, len: usize| -> Result<Vec<f64>> {
            let t = ck.tensor(name)?;
            if t.len() != len {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has {} entries, expected {len}",
                    t.len()
                )));
            }
            Ok(t.to_vec())
        };
        if let Some(env) = ck.meta_value("env") {
            if env != self.env.name() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint was trained on `{env}`, not `{}`",
                    self.env.name()
                )));
            }
        }
        self.policy.mlp.params = expect("policy.mlp", self.policy.mlp.params.len())?;
        self.policy.log_std = expect("policy.log_std", self.policy.log_std.len())?;
        self.value.mlp.params = expect("value.mlp", self.value.mlp.params.len())?;
        self.safety.mlp.params = expect("safety.mlp", self.safety.mlp.params.len())?;
        self.opt_policy.m = expect("adam.policy.m", self.opt_policy.m.len())?;
        self.opt_policy.v = expect("adam.policy.v", self.opt_policy.v.len())?;
        self.opt_log_std.m = expect("adam.log_std.m", self.opt_log_std.m.len())?;
        self.opt_log_std.v = expect("adam.log_std.v", self.opt_log_std.v.len())?;
        self.opt_value.m = expect("adam.value.m", self.opt_value.m.len())?;
        self.opt_value.v = expect("adam.value.v", self.opt_value.v.len())?;
        self.opt_safety.m = expect("adam.safety.m", self.opt_safety.m.len())?;
        self.opt_safety.v = expect("adam.safety.v", self.opt_safety.v.len())?;
        let steps = expect("adam.steps", 4)?;
        self.opt_policy.step = steps[0] as u64;
        self.opt_log_std.step = steps[1] as u64;
        self.opt_value.step = steps[2] as u64;
        self.opt_safety.step = steps[3] as u64;
        Ok(())
    }
}

/// Evaluation summary for a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_cost: f64,
    pub cost_std: f64,
    /// Fraction of episodes whose cumulative cost never exceeded the limit;
    /// the empirical safety value of the policy.
    pub safe_fraction: f64,
}

/// Rolls out a policy for `episodes` episodes and reports aggregates.
pub fn evaluate_policy(
    env: &mut dyn Env,
    policy: &PolicyNet,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("need at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    let mut costs = Vec::with_capacity(episodes);
    let mut safe = 0usize;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        let mut total_reward = 0.0;
        let mut total_cost = 0.0;
        for _ in 0..env.horizon() {
            let (action, _) = policy.sample(&obs, &mut rng)?;
            let out = env.step(&action)?;
            total_reward += out.reward;
            total_cost += out.cost;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        if total_cost <= env.cost_limit() {
            safe += 1;
        }
        returns.push(total_reward);
        costs.push(total_cost);
    }
    let n = episodes as f64;
    let mean_return = returns.iter().sum::<f64>() / n;
    let mean_cost = costs.iter().sum::<f64>() / n;
    let cost_var = costs.iter().map(|c| (c - mean_cost).powi(2)).sum::<f64>() / n;
    Ok(EvalReport {
        episodes,
        mean_return,
        mean_cost,
        cost_std: cost_var.sqrt(),
        safe_fraction: safe as f64 / n,
    })
}

/// Rebuilds a policy network from a checkpoint for evaluation, verifying it
/// matches the target environment.
pub fn policy_from_checkpoint(ck: &Checkpoint, env: &dyn Env) -> Result<PolicyNet> {
    if let Some(name) = ck.meta_value("env") {
        if name != env.name() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on `{name}`, not `{}`",
                env.name()
            )));
        }
    }
    let obs_dim: usize = ck
        .meta_value("obs_dim")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint("missing obs_dim".into()))?;
    if obs_dim != env.obs_dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects {obs_dim} observation features, environment provides {}",
            env.obs_dim()
        )));
    }
    let hidden: usize = ck
        .meta_value("hidden_dim")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint("missing hidden_dim".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = PolicyNet::new(obs_dim, hidden, env.action_space(), &mut rng);
    let params = ck.tensor("policy.mlp")?;
    if params.len() != policy.mlp.params.len() {
        return Err(Error::Checkpoint(
            "policy parameter count does not match the environment".into(),
        ));
    }
    policy.mlp.params = params.to_vec();
    policy.log_std = ck.tensor("policy.log_std")?.to_vec();
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CommonOverrides, TabularEnv};

    fn tiny_cfg(env: &str) -> TrainConfig {
        let mut cfg = TrainConfig::table_defaults(env).unwrap();
        cfg.timesteps = 128;
        cfg.iterations = 2;
        cfg.hidden_dim = 16;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn transform_reward_conventions() {
        // Fully safe estimate leaves the biased reward unchanged.
        let out = transform_rewards(
            &[1.0, 2.0],
            &[0.0, 1.0],
            &[1.0, 1.0],
            Mode::Scpo,
            KPower::Finite(4),
            3.0,
            0.5,
        )
        .unwrap();
        assert_eq!(out, vec![1.5, 2.5]);
        // Fully unsafe estimate leaves only the cost penalty.
        let out = transform_rewards(
            &[1.0],
            &[2.0],
            &[0.0],
            Mode::Scpo,
            KPower::Finite(1),
            3.0,
            0.5,
        )
        .unwrap();
        assert_eq!(out, vec![-6.0]);
        // k = 0 makes the literal formula ignore the estimate entirely.
        let out = transform_rewards(
            &[1.0],
            &[2.0],
            &[0.0],
            Mode::Scpo,
            KPower::Finite(0),
            3.0,
            0.5,
        )
        .unwrap();
        assert_eq!(out, vec![1.5]);
        // Negative biased reward is rejected with the step index.
        let err = transform_rewards(
            &[0.0, -1.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            Mode::Scpo,
            KPower::Finite(1),
            0.0,
            0.5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("step 1"));
    }

    #[test]
    fn lagrangian_with_zero_beta_matches_unconstrained() {
        let r = [0.2, 0.9];
        let c = [1.0, 0.0];
        let a = transform_rewards(&r, &c, &[], Mode::Lagrangian, KPower::Finite(0), 0.0, 0.1)
            .unwrap();
        let b = transform_rewards(&r, &c, &[], Mode::Unconstrained, KPower::Finite(0), 7.0, 0.1)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn surrogate_is_zero_at_the_old_policy() {
        for est in [EstimatorChoice::L1, EstimatorChoice::L2] {
            let (obj, grad) = surrogate_term(est, -1.3, -1.3, 2.5, 0.2);
            assert_eq!(obj, 0.0);
            assert!((grad - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_clips_large_ratios() {
        // ratio 1.5 with positive advantage: clip to 0.2 * adv, no gradient.
        let (obj, grad) = surrogate_term(EstimatorChoice::L1, 0.0, 1.5f64.ln(), 1.0, 0.2);
        assert!((obj - 0.2).abs() < 1e-12);
        assert_eq!(grad, 0.0);
    }

    #[test]
    fn l1_and_l2_gradients_coincide_at_theta_zero() {
        // Full policy-gradient comparison through the networks on a batch.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let policy = PolicyNet::new(3, 8, ActionSpace::Continuous(2), &mut rng);
        let obs_batch: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut grads = [vec![0.0; policy.mlp.params.len()], vec![
            0.0;
            policy.mlp.params.len()
        ]];
        let mut ls_grads = [vec![0.0; 2], vec![0.0; 2]];
        for (j, est) in [EstimatorChoice::L1, EstimatorChoice::L2].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            for obs in &obs_batch {
                let (action, old_lp) = policy.sample(obs, &mut rng).unwrap();
                let adv = rng.random_range(-1.0..1.0);
                let eval = policy.evaluate(obs, &action).unwrap();
                let (_, dobj) = surrogate_term(*est, old_lp, eval.log_prob, adv, 0.2);
                policy
                    .backward(&eval, -dobj, 0.0, &mut grads[j], &mut ls_grads[j])
                    .unwrap();
            }
        }
        let max_dev = grads[0]
            .iter()
            .zip(&grads[1])
            .chain(ls_grads[0].iter().zip(&ls_grads[1]))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 1e-8, "gradient deviation {max_dev}");
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let run = |seed: u64| -> Vec<IterationMetrics> {
            let mut cfg = tiny_cfg("cart_safe");
            cfg.seed = seed;
            let mut trainer = Trainer::from_config(cfg).unwrap();
            (0..2).map(|_| trainer.train_iteration().unwrap()).collect()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a, b);
        let c = run(6);
        assert_ne!(a, c);
    }

    #[test]
    fn scpo_with_saturated_critic_matches_unconstrained_on_cost_free_env() {
        // On an environment that never charges cost, a safety critic pinned
        // at 1 makes the reward transform the identity, so the whole run
        // matches the unconstrained mode sample for sample.
        let cost_free = crate::cmdp::TabularCmdp::new(
            2,
            2,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
            vec![1.0, 0.2, 0.4, 0.8],
            vec![0.0, 0.0],
            1.0,
            8,
            0,
        )
        .unwrap();
        let run = |mode: Mode, k: KPower, saturate: bool| -> Vec<IterationMetrics> {
            let mut cfg = tiny_cfg("cart_safe");
            cfg.env = "tabular".into();
            cfg.mode = mode;
            cfg.k = k;
            cfg.beta = 2.0;
            cfg.reward_bias_b = 0.0;
            let env = TabularEnv::new(cost_free.clone(), CommonOverrides::default());
            let mut trainer = Trainer::with_env(cfg, Box::new(env)).unwrap();
            if saturate {
                trainer.safety.saturate_to_one();
            }
            (0..2).map(|_| trainer.train_iteration().unwrap()).collect()
        };
        let unconstrained = run(Mode::Unconstrained, KPower::Finite(0), true);
        for k in [KPower::Finite(1), KPower::Finite(4), KPower::Infinite] {
            let scpo = run(Mode::Scpo, k, true);
            assert_eq!(
                scpo, unconstrained,
                "saturated-critic run diverged at k = {k}"
            );
        }
        // k = 0 needs no saturation: the literal transform is the identity.
        let scpo_k0 = run(Mode::Scpo, KPower::Finite(0), false);
        let unconstrained_plain = run(Mode::Unconstrained, KPower::Finite(0), false);
        assert_eq!(scpo_k0, unconstrained_plain);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut trainer = Trainer::from_config(tiny_cfg("point_run")).unwrap();
        trainer.train_iteration().unwrap();
        let ck = trainer.checkpoint();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        let mut other = Trainer::from_config(tiny_cfg("point_run")).unwrap();
        other.load_checkpoint(&back).unwrap();
        assert!(trainer
            .policy
            .mlp
            .params
            .iter()
            .zip(&other.policy.mlp.params)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(trainer
            .opt_policy
            .m
            .iter()
            .zip(&other.opt_policy.m)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(trainer.opt_policy.step, other.opt_policy.step);
    }

    #[test]
    fn eval_rejects_zero_episodes_and_env_mismatch() {
        let trainer = Trainer::from_config(tiny_cfg("point_run")).unwrap();
        let mut env = crate::envs::make_env("point_run", &Default::default()).unwrap();
        assert!(evaluate_policy(env.as_mut(), &trainer.policy, 0, 1).is_err());
        let ck = trainer.checkpoint();
        let cart = crate::envs::make_env("cart_safe", &Default::default()).unwrap();
        assert!(policy_from_checkpoint(&ck, cart.as_ref()).is_err());
        assert!(policy_from_checkpoint(&ck, env.as_ref()).is_ok());
    }
}
