//! Desk-scale constrained control environments.
//!
//! Every environment tracks its own cumulative cost and, unless the
//! unaugmented ablation flag is set, appends the clipped normalized
//! cumulative cost to each observation. Episodes are deterministic given
//! the reset seed and the action sequence.
//!
//! Cost attribution: continuous tasks charge the cost of the state an action
//! lands in; the tabular adapter charges states on entry, including the
//! initial state, matching the exact-oracle bookkeeping.

mod cart;
mod gather;
mod point;
mod tabular;

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

pub use cart::{CartParams, CartSafeEnv, CartState};
pub use gather::{GatherGridEnv, GatherParams};
pub use point::{PointCircleEnv, PointCircleParams, PointRunEnv, PointRunParams, PointState};
pub use tabular::TabularEnv;

use crate::error::{Error, Result};
use crate::nn::{Action, ActionSpace};

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Cost charged to this step; the trainer's prefix sums of this column
    /// define the safety flags.
    pub cost: f64,
    pub done: bool,
}

/// A constrained episodic environment.
pub trait Env {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn horizon(&self) -> usize;
    fn cost_limit(&self) -> f64;
    /// Starts a new episode; the rng drives any spawn randomness.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepOutcome>;
}

/// Shared augmentation bookkeeping for the concrete environments.
#[derive(Debug, Clone)]
pub(crate) struct CostTracker {
    pub q: f64,
    pub limit: f64,
    pub delta: f64,
    pub augment: bool,
}

impl CostTracker {
    fn new(limit: f64, delta: f64, augment: bool) -> Self {
        Self {
            q: 0.0,
            limit,
            delta,
            augment,
        }
    }

    fn reset(&mut self) {
        self.q = 0.0;
    }

    fn charge(&mut self, cost: f64) {
        self.q += cost;
    }

    fn extend_obs(&self, mut obs: Vec<f64>) -> Vec<f64> {
        if self.augment {
            obs.push(crate::cmdp::q_clip(self.q, self.limit, self.delta));
        }
        obs
    }

    fn extra_dims(&self) -> usize {
        usize::from(self.augment)
    }
}

/// Common override keys shared by every environment.
#[derive(Debug, Clone, Copy)]
pub struct CommonOverrides {
    pub augment: bool,
    pub delta: f64,
}

impl Default for CommonOverrides {
    fn default() -> Self {
        Self {
            augment: true,
            delta: crate::cmdp::DEFAULT_DELTA,
        }
    }
}

/// Typed view over a flat `name -> value` override map that records which
/// keys were consumed, so unknown keys can be rejected.
pub(crate) struct Overrides<'a> {
    map: &'a HashMap<String, f64>,
    used: std::cell::RefCell<Vec<String>>,
}

impl<'a> Overrides<'a> {
    fn new(map: &'a HashMap<String, f64>) -> Self {
        Self {
            map,
            used: std::cell::RefCell::new(Vec::new()),
        }
    }

    pub fn get(&self, key: &str, default: f64) -> f64 {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).copied().unwrap_or(default)
    }

    pub fn get_bool(&self, key: &str, default: bool) -> bool {
        self.get(key, if default { 1.0 } else { 0.0 }) != 0.0
    }

    fn finish(self) -> Result<()> {
        let used = self.used.into_inner();
        for key in self.map.keys() {
            if !used.contains(key) {
                return Err(Error::InvalidConfig(format!(
                    "unknown environment parameter `{key}`"
                )));
            }
        }
        Ok(())
    }
}

/// Environment names the registry accepts.
pub const ENV_NAMES: [&str; 4] = ["point_run", "point_circle", "cart_safe", "gather_grid"];

/// Builds an environment by name with flat parameter overrides
/// (booleans as 0/1). Unknown names or keys are rejected.
pub fn make_env(name: &str, params: &HashMap<String, f64>) -> Result<Box<dyn Env>> {
    let ov = Overrides::new(params);
    let env: Box<dyn Env> = match name {
        "point_run" => Box::new(PointRunEnv::from_overrides(&ov)),
        "point_circle" => Box::new(PointCircleEnv::from_overrides(&ov)),
        "cart_safe" => Box::new(CartSafeEnv::from_overrides(&ov)),
        "gather_grid" => Box::new(GatherGridEnv::from_overrides(&ov)),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown environment `{other}` (expected one of {ENV_NAMES:?})"
            )))
        }
    };
    ov.finish()?;
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn registry_rejects_unknown_names_and_keys() {
        assert!(make_env("point_run", &HashMap::new()).is_ok());
        assert!(make_env("nope", &HashMap::new()).is_err());
        let mut params = HashMap::new();
        params.insert("not_a_param".to_string(), 1.0);
        assert!(make_env("point_run", &params).is_err());
    }

    #[test]
    fn overrides_change_parameters() {
        let mut params = HashMap::new();
        params.insert("horizon".to_string(), 17.0);
        params.insert("augment".to_string(), 0.0);
        let env = make_env("point_run", &params).unwrap();
        assert_eq!(env.horizon(), 17);
        // Unaugmented observations drop the cost feature.
        let plain = make_env("point_run", &HashMap::new()).unwrap();
        assert_eq!(env.obs_dim() + 1, plain.obs_dim());
    }

    #[test]
    fn episodes_are_deterministic_given_seed_and_actions() {
        for name in ENV_NAMES {
            let mut a = make_env(name, &HashMap::new()).unwrap();
            let mut b = make_env(name, &HashMap::new()).unwrap();
            let mut rng_a = ChaCha8Rng::seed_from_u64(5);
            let mut rng_b = ChaCha8Rng::seed_from_u64(5);
            assert_eq!(a.reset(&mut rng_a), b.reset(&mut rng_b), "{name}");
            for i in 0..40 {
                let action = match a.action_space() {
                    ActionSpace::Discrete(n) => Action::Discrete(i % n),
                    ActionSpace::Continuous(d) => {
                        Action::Continuous((0..d).map(|j| ((i + j) as f64).sin()).collect())
                    }
                };
                let sa = a.step(&action).unwrap();
                let sb = b.step(&action).unwrap();
                assert_eq!(sa, sb, "{name} diverged at step {i}");
                if sa.done {
                    break;
                }
            }
        }
    }
}
