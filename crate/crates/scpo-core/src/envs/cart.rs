//! Cart-pole balancing with a position corridor constraint.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Action, ActionSpace};

use super::{CommonOverrides, CostTracker, Env, Overrides, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

/// Physical constants (the conventional cart-pole set) and task parameters.
#[derive(Debug, Clone, Copy)]
pub struct CartParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub length: f64,
    pub force_mag: f64,
    pub tau: f64,
    /// Episode ends when the cart strays past this distance.
    pub x_threshold: f64,
    /// Half-width of the cost band around the centre.
    pub band: f64,
    /// Literal reading of the cost: charge inside the band instead of
    /// outside it.
    pub cost_inside_band: bool,
    pub horizon: usize,
    pub cost_limit: f64,
}

impl Default for CartParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            band: 1.0,
            cost_inside_band: false,
            horizon: 300,
            cost_limit: 1.0,
        }
    }
}

/// Keep the pole upright while staying near the centre of the track.
///
/// Reward is `1 + cos(pole angle)`. The default cost charges positions
/// outside the central band; the literal in-band reading stays available
/// behind `cost_inside_band`. There is no angle termination: a fallen pole
/// keeps swinging, it just earns nothing.
#[derive(Debug, Clone)]
pub struct CartSafeEnv {
    pub params: CartParams,
    pub state: CartState,
    tracker: CostTracker,
    steps: usize,
    done: bool,
}

impl CartSafeEnv {
    pub fn new(params: CartParams, common: CommonOverrides) -> Self {
        Self {
            params,
            state: CartState::default(),
            tracker: CostTracker::new(params.cost_limit, common.delta, common.augment),
            steps: 0,
            done: false,
        }
    }

    pub(super) fn from_overrides(ov: &Overrides) -> Self {
        let d = CartParams::default();
        let params = CartParams {
            gravity: ov.get("gravity", d.gravity),
            mass_cart: ov.get("mass_cart", d.mass_cart),
            mass_pole: ov.get("mass_pole", d.mass_pole),
            length: ov.get("length", d.length),
            force_mag: ov.get("force_mag", d.force_mag),
            tau: ov.get("tau", d.tau),
            x_threshold: ov.get("x_threshold", d.x_threshold),
            band: ov.get("band", d.band),
            cost_inside_band: ov.get_bool("cost_inside_band", d.cost_inside_band),
            horizon: ov.get("horizon", d.horizon as f64) as usize,
            cost_limit: ov.get("cost_limit", d.cost_limit),
        };
        let common = CommonOverrides {
            augment: ov.get_bool("augment", true),
            delta: ov.get("delta", crate::cmdp::DEFAULT_DELTA),
        };
        Self::new(params, common)
    }

    fn observe(&self) -> Vec<f64> {
        // The pole can rotate freely, so the angle enters as sin/cos.
        self.tracker.extend_obs(vec![
            self.state.x,
            self.state.x_dot,
            self.state.theta.sin(),
            self.state.theta.cos(),
            self.state.theta_dot,
        ])
    }

    pub fn reward_at(state: &CartState) -> f64 {
        1.0 + state.theta.cos()
    }

    fn cost_at(&self, state: &CartState) -> f64 {
        let inside = state.x.abs() < self.params.band;
        let charged = if self.params.cost_inside_band {
            inside
        } else {
            !inside
        };
        if charged {
            1.0
        } else {
            0.0
        }
    }
}

impl Env for CartSafeEnv {
    fn name(&self) -> &'static str {
        "cart_safe"
    }

    fn obs_dim(&self) -> usize {
        5 + self.tracker.extra_dims()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn cost_limit(&self) -> f64 {
        self.params.cost_limit
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.state = CartState {
            x: rng.random_range(-0.05..0.05),
            x_dot: rng.random_range(-0.05..0.05),
            theta: rng.random_range(-0.05..0.05),
            theta_dot: rng.random_range(-0.05..0.05),
        };
        self.tracker.reset();
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::InvalidConfig(
                "episode is over; reset the environment".into(),
            ));
        }
        let force = match action {
            Action::Discrete(1) => self.params.force_mag,
            Action::Discrete(0) => -self.params.force_mag,
            Action::Discrete(a) => {
                return Err(Error::InvalidConfig(format!("action {a} out of range")))
            }
            Action::Continuous(_) => {
                return Err(Error::InvalidConfig(
                    "cart task takes discrete actions".into(),
                ))
            }
        };
        let p = self.params;
        let total_mass = p.mass_cart + p.mass_pole;
        let pole_mass_length = p.mass_pole * p.length;
        let (sin_t, cos_t) = self.state.theta.sin_cos();
        let temp =
            (force + pole_mass_length * self.state.theta_dot.powi(2) * sin_t) / total_mass;
        let theta_acc = (p.gravity * sin_t - cos_t * temp)
            / (p.length * (4.0 / 3.0 - p.mass_pole * cos_t * cos_t / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

        // Semi-implicit Euler: velocities first, then positions.
        self.state.x_dot += p.tau * x_acc;
        self.state.x += p.tau * self.state.x_dot;
        self.state.theta_dot += p.tau * theta_acc;
        self.state.theta += p.tau * self.state.theta_dot;

        self.steps += 1;
        let cost = self.cost_at(&self.state);
        self.tracker.charge(cost);
        self.done = self.state.x.abs() > p.x_threshold || self.steps >= p.horizon;
        Ok(StepOutcome {
            obs: self.observe(),
            reward: Self::reward_at(&self.state),
            cost,
            done: self.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn reward_tracks_pole_angle() {
        assert_eq!(CartSafeEnv::reward_at(&CartState::default()), 2.0);
        let fallen = CartState {
            theta: std::f64::consts::PI,
            ..Default::default()
        };
        assert!(CartSafeEnv::reward_at(&fallen).abs() < 1e-12);
    }

    #[test]
    fn leaving_the_track_terminates() {
        let mut env = CartSafeEnv::new(CartParams::default(), CommonOverrides::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        env.state.x = 2.5;
        env.state.x_dot = 1.0;
        let out = env.step(&Action::Discrete(1)).unwrap();
        assert!(out.done);
        assert!(env.step(&Action::Discrete(1)).is_err());
    }

    #[test]
    fn cost_band_readings() {
        let mut env = CartSafeEnv::new(CartParams::default(), CommonOverrides::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        env.state = CartState {
            x: 1.5,
            ..Default::default()
        };
        let out = env.step(&Action::Discrete(0)).unwrap();
        assert_eq!(out.cost, 1.0, "outside the band costs by default");

        let literal = CartParams {
            cost_inside_band: true,
            ..Default::default()
        };
        let mut env = CartSafeEnv::new(literal, CommonOverrides::default());
        env.reset(&mut rng);
        env.state = CartState::default();
        let out = env.step(&Action::Discrete(0)).unwrap();
        assert_eq!(out.cost, 1.0, "literal reading charges inside the band");
    }

    #[test]
    fn random_policy_is_usually_unsafe() {
        let mut env = CartSafeEnv::new(CartParams::default(), CommonOverrides::default());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let episodes = 40;
        let mut unsafe_episodes = 0;
        for _ in 0..episodes {
            env.reset(&mut rng);
            let mut q = 0.0;
            loop {
                let a = Action::Discrete(usize::from(rng.random_bool(0.5)));
                let out = env.step(&a).unwrap();
                q += out.cost;
                if out.done {
                    break;
                }
            }
            if q > env.cost_limit() {
                unsafe_episodes += 1;
            }
        }
        assert!(
            unsafe_episodes * 2 > episodes,
            "only {unsafe_episodes}/{episodes} random episodes were unsafe"
        );
    }
}
