//! Finite constrained-MDP data model and trajectory mechanics.
//!
//! A [`TabularCmdp`] is an MDP with a per-state nonnegative cost, a cumulative
//! cost budget `c0`, and a finite horizon. Observations everywhere else in the
//! crate are *augmented*: the running cumulative cost `q_t`, normalized by the
//! budget and clipped, rides along with the base state. A state is safe while
//! the clipped ratio stays at or below one; the safety indicator of a whole
//! trajectory is the product of its per-step flags.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::policy::Policy;

/// Tolerance for the transition-row simplex invariant.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Tolerance used when validating policy distributions during rollouts.
const POLICY_NORM_TOL: f64 = 1e-9;

/// Finite CMDP: transition tensor, reward, per-state cost, budget and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `(s, a, s')` transition probabilities.
    pub transition: Vec<f64>,
    /// Row-major `(s, a)` rewards.
    pub reward: Vec<f64>,
    /// Per-state nonnegative cost, charged when the state is entered.
    pub cost: Vec<f64>,
    /// Maximum allowed cumulative cost.
    pub budget_c0: f64,
    /// Episode length in steps; every rollout visits exactly this many states.
    pub horizon_t: usize,
    pub initial_state: usize,
}

impl TabularCmdp {
    /// Validates all structural invariants and returns the CMDP.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        cost: Vec<f64>,
        budget_c0: f64,
        horizon_t: usize,
        initial_state: usize,
    ) -> Result<Self> {
        let cmdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            cost,
            budget_c0,
            horizon_t,
            initial_state,
        };
        cmdp.validate()?;
        Ok(cmdp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::InvalidCmdp("empty state or action space".into()));
        }
        if self.transition.len() != self.n_states * self.n_actions * self.n_states {
            return Err(Error::InvalidCmdp(format!(
                "transition tensor has {} entries, expected {}",
                self.transition.len(),
                self.n_states * self.n_actions * self.n_states
            )));
        }
        if self.reward.len() != self.n_states * self.n_actions {
            return Err(Error::InvalidCmdp(format!(
                "reward tensor has {} entries, expected {}",
                self.reward.len(),
                self.n_states * self.n_actions
            )));
        }
        if self.cost.len() != self.n_states {
            return Err(Error::InvalidCmdp(format!(
                "cost vector has {} entries, expected {}",
                self.cost.len(),
                self.n_states
            )));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidCmdp(format!(
                        "transition row (s={s}, a={a}) sums to {sum}"
                    )));
                }
                if row.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidCmdp(format!(
                        "transition row (s={s}, a={a}) has a negative entry"
                    )));
                }
            }
        }
        if self.cost.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::InvalidCmdp("costs must be finite and >= 0".into()));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidCmdp("rewards must be finite".into()));
        }
        if self.budget_c0 < 0.0 || !self.budget_c0.is_finite() {
            return Err(Error::InvalidCmdp("budget c0 must be finite and >= 0".into()));
        }
        if self.horizon_t < 1 {
            return Err(Error::InvalidCmdp("horizon must be >= 1".into()));
        }
        if self.initial_state >= self.n_states {
            return Err(Error::InvalidCmdp(format!(
                "initial state {} out of range",
                self.initial_state
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }
}

/// Default width of the clip margin above 1 in `q^clip`.
pub const DEFAULT_DELTA: f64 = 0.01;

/// Normalized, clipped cumulative cost: `clip(q / c0, 0, 1 + delta)`.
///
/// Rejects `c0 = 0`; zero-budget tasks go through [`q_clip`], which keeps the
/// "any cost is unsafe" semantics without dividing by zero.
pub fn augment_q(q: f64, c0: f64, delta: f64) -> Result<f64> {
    if !(c0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "augment_q requires c0 > 0, got {c0}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "augment_q requires delta > 0, got {delta}"
        )));
    }
    Ok((q / c0).clamp(0.0, 1.0 + delta))
}

/// Total version of [`augment_q`] covering the zero-budget convention:
/// with `c0 = 0` the result is `0` for `q = 0` and `1 + delta` otherwise.
pub fn q_clip(q: f64, c0: f64, delta: f64) -> f64 {
    if c0 > 0.0 {
        (q / c0).clamp(0.0, 1.0 + delta)
    } else if q == 0.0 {
        0.0
    } else {
        1.0 + delta
    }
}

/// Per-state safety flag: safe iff the clipped cost ratio is at most one.
#[inline]
pub fn safety_flag(q_clip: f64) -> bool {
    q_clip <= 1.0
}

/// Environment features extended with the clipped normalized cumulative cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedObservation {
    pub base_features: Vec<f64>,
    pub q_clip: f64,
}

impl AugmentedObservation {
    pub fn new(base_features: Vec<f64>, q: f64, c0: f64, delta: f64) -> Self {
        Self {
            base_features,
            q_clip: q_clip(q, c0, delta),
        }
    }

    /// Flattens into a single feature vector with `q_clip` appended.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.base_features.clone();
        v.push(self.q_clip);
        v
    }
}

/// One trajectory step: the state visited, action taken, and the reward and
/// state-entry cost charged at that step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub cost: f64,
}

/// Ordered trajectory record with cumulative-cost and safety bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Prefix sums `q_t` of the cost column, including the step-0 cost.
    pub cumulative_costs: Vec<f64>,
    /// Per-step flags `f(s_t)`; nonincreasing for any real rollout.
    pub safety_flags: Vec<bool>,
}

impl Trajectory {
    /// Builds cumulative costs and safety flags from raw steps.
    pub fn from_steps(steps: Vec<Step>, c0: f64, delta: f64) -> Self {
        Self::from_steps_offset(steps, c0, delta, 0.0)
    }

    /// Like [`Trajectory::from_steps`] but with cost already accrued before
    /// the first step, used when working with trajectory suffixes.
    pub fn from_steps_offset(steps: Vec<Step>, c0: f64, delta: f64, q_offset: f64) -> Self {
        let mut cumulative_costs = Vec::with_capacity(steps.len());
        let mut safety_flags = Vec::with_capacity(steps.len());
        let mut q = q_offset;
        for step in &steps {
            q += step.cost;
            cumulative_costs.push(q);
            safety_flags.push(safety_flag(q_clip(q, c0, delta)));
        }
        Self {
            steps,
            cumulative_costs,
            safety_flags,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Final cumulative cost, i.e. the episode's total cost.
    pub fn final_cost(&self) -> f64 {
        self.cumulative_costs.last().copied().unwrap_or(0.0)
    }

    fn check_flags_monotone(&self) -> Result<()> {
        let mut seen_unsafe = false;
        for &f in &self.safety_flags {
            if seen_unsafe && f {
                return Err(Error::InvalidTrajectory(
                    "safety flags are not nonincreasing".into(),
                ));
            }
            if !f {
                seen_unsafe = true;
            }
        }
        Ok(())
    }
}

/// Trajectory safety indicator: the product of per-step flags.
///
/// Rejects empty trajectories and flag sequences that violate the
/// monotone-flag invariant.
pub fn trajectory_safety(traj: &Trajectory) -> Result<bool> {
    if traj.is_empty() {
        return Err(Error::InvalidTrajectory("empty trajectory".into()));
    }
    if traj.safety_flags.len() != traj.steps.len() {
        return Err(Error::InvalidTrajectory(
            "flag list length differs from step count".into(),
        ));
    }
    traj.check_flags_monotone()?;
    Ok(traj.safety_flags.iter().all(|&f| f))
}

/// Samples an index from a distribution, validating normalization.
pub(crate) fn sample_categorical(
    rng: &mut ChaCha8Rng,
    probs: &[f64],
    state: usize,
) -> Result<usize> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > POLICY_NORM_TOL || probs.iter().any(|&p| p < 0.0) {
        return Err(Error::NonNormalizedPolicy { state, sum });
    }
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

/// Samples one trajectory of exactly `horizon_t` steps.
///
/// The policy acts on augmented states `(s, q)`. Costs accrue on state entry,
/// including the initial state at `t = 0`. Deterministic given the seed.
pub fn rollout(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    delta: f64,
    rng_seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rollout_with_rng(cmdp, policy, delta, &mut rng)
}

pub fn rollout_with_rng(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let mut steps = Vec::with_capacity(cmdp.horizon_t);
    let mut state = cmdp.initial_state;
    let mut q = 0.0;
    for _ in 0..cmdp.horizon_t {
        q += cmdp.cost[state];
        let probs = policy.action_probs(state, q);
        if probs.len() != cmdp.n_actions {
            return Err(Error::DimensionMismatch {
                expected: cmdp.n_actions,
                got: probs.len(),
            });
        }
        let action = sample_categorical(rng, &probs, state)?;
        steps.push(Step {
            state,
            action,
            reward: cmdp.r(state, action),
            cost: cmdp.cost[state],
        });
        state = sample_categorical(rng, cmdp.transition_row(state, action), state)?;
    }
    Ok(Trajectory::from_steps(steps, cmdp.budget_c0, delta))
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Serializes a CMDP to the key-value text format.
///
/// Tensors are flattened row-major: `reward` over `(s, a)`, `transition`
/// over `(s, a, s')`.
pub fn to_text(cmdp: &TabularCmdp) -> String {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "n_states = {}\nn_actions = {}\ns0 = {}\nT = {}\nc0 = {}\ncost = {}\nreward = {}\ntransition = {}\n",
        cmdp.n_states,
        cmdp.n_actions,
        cmdp.initial_state,
        cmdp.horizon_t,
        cmdp.budget_c0,
        join(&cmdp.cost),
        join(&cmdp.reward),
        join(&cmdp.transition),
    )
}

/// Parses the key-value CMDP document, enforcing every structural invariant.
pub fn from_text(text: &str) -> Result<TabularCmdp> {
    let mut fields: std::collections::HashMap<&str, String> = std::collections::HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        if fields.insert(key, value.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("duplicate key `{key}`")));
        }
    }
    let get = |k: &str| -> Result<String> {
        fields
            .get(k)
            .cloned()
            .ok_or_else(|| Error::Parse(format!("missing key `{k}`")))
    };
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|e| Error::Parse(format!("key `{k}`: {e}")))
    };
    let parse_f64 = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|e| Error::Parse(format!("key `{k}`: {e}")))
    };
    let parse_vec = |k: &str| -> Result<Vec<f64>> {
        get(k)?
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|e| Error::Parse(format!("key `{k}`: {e}")))
            })
            .collect()
    };

    let known = [
        "n_states",
        "n_actions",
        "s0",
        "T",
        "c0",
        "cost",
        "reward",
        "transition",
    ];
    for key in fields.keys() {
        if !known.contains(key) {
            return Err(Error::Parse(format!("unknown key `{key}`")));
        }
    }

    TabularCmdp::new(
        parse_usize("n_states")?,
        parse_usize("n_actions")?,
        parse_vec("transition")?,
        parse_vec("reward")?,
        parse_vec("cost")?,
        parse_f64("c0")?,
        parse_usize("T")?,
        parse_usize("s0")?,
    )
}
