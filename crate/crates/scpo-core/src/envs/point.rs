//! Planar force-controlled ball tasks.
//!
//! The agent is a point mass on the xy-plane driven by a bounded force with
//! linear damping, integrated with a semi-implicit Euler step. Physics
//! constants are chosen so a random policy on the run task violates its
//! budget within one episode more often than not.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Action, ActionSpace};

use super::{CommonOverrides, CostTracker, Env, Overrides, StepOutcome};

/// Position and velocity of the ball.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

fn integrate(state: &mut PointState, action: &[f64], dt: f64, force: f64, damping: f64, v_max: f64) {
    for i in 0..2 {
        let a = action[i].clamp(-1.0, 1.0);
        state.vel[i] += (a * force - damping * state.vel[i]) * dt;
    }
    let speed = (state.vel[0] * state.vel[0] + state.vel[1] * state.vel[1]).sqrt();
    if speed > v_max {
        let scale = v_max / speed;
        state.vel[0] *= scale;
        state.vel[1] *= scale;
    }
    state.pos[0] += state.vel[0] * dt;
    state.pos[1] += state.vel[1] * dt;
}

fn continuous_action(action: &Action) -> Result<&[f64]> {
    match action {
        Action::Continuous(a) if a.len() == 2 => Ok(a),
        Action::Continuous(a) => Err(Error::DimensionMismatch {
            expected: 2,
            got: a.len(),
        }),
        Action::Discrete(_) => Err(Error::InvalidConfig(
            "point tasks take continuous actions".into(),
        )),
    }
}

/// Run-task constants, frozen alongside the crate.
#[derive(Debug, Clone, Copy)]
pub struct PointRunParams {
    pub dt: f64,
    pub force_scale: f64,
    pub damping: f64,
    pub v_max: f64,
    /// Speed above which a unit cost is charged.
    pub speed_limit: f64,
    /// Lateral boundary; straying beyond it also costs.
    pub y_lim: f64,
    pub reward_scale: f64,
    pub horizon: usize,
    pub cost_limit: f64,
}

impl Default for PointRunParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            force_scale: 5.0,
            damping: 0.25,
            v_max: 5.0,
            speed_limit: 2.5,
            y_lim: 2.0,
            reward_scale: 0.1,
            horizon: 250,
            cost_limit: 25.0,
        }
    }
}

/// Run as fast as possible in the +x direction without speeding.
#[derive(Debug, Clone)]
pub struct PointRunEnv {
    pub params: PointRunParams,
    pub state: PointState,
    tracker: CostTracker,
    steps: usize,
}

impl PointRunEnv {
    pub fn new(params: PointRunParams, common: CommonOverrides) -> Self {
        Self {
            params,
            state: PointState::default(),
            tracker: CostTracker::new(params.cost_limit, common.delta, common.augment),
            steps: 0,
        }
    }

    pub(super) fn from_overrides(ov: &Overrides) -> Self {
        let d = PointRunParams::default();
        let params = PointRunParams {
            dt: ov.get("dt", d.dt),
            force_scale: ov.get("force_scale", d.force_scale),
            damping: ov.get("damping", d.damping),
            v_max: ov.get("v_max", d.v_max),
            speed_limit: ov.get("speed_limit", d.speed_limit),
            y_lim: ov.get("y_lim", d.y_lim),
            reward_scale: ov.get("reward_scale", d.reward_scale),
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
        self.tracker.extend_obs(vec![
            self.state.pos[1],
            self.state.vel[0],
            self.state.vel[1],
        ])
    }

    pub fn speed(&self) -> f64 {
        (self.state.vel[0] * self.state.vel[0] + self.state.vel[1] * self.state.vel[1]).sqrt()
    }
}

impl Env for PointRunEnv {
    fn name(&self) -> &'static str {
        "point_run"
    }

    fn obs_dim(&self) -> usize {
        3 + self.tracker.extra_dims()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn cost_limit(&self) -> f64 {
        self.params.cost_limit
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.state = PointState {
            pos: [0.0, 0.0],
            vel: [
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            ],
        };
        self.tracker.reset();
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let a = continuous_action(action)?;
        let p = self.params;
        integrate(&mut self.state, a, p.dt, p.force_scale, p.damping, p.v_max);
        self.steps += 1;
        let violated = self.speed() > p.speed_limit || self.state.pos[1].abs() > p.y_lim;
        let cost = if violated { 1.0 } else { 0.0 };
        self.tracker.charge(cost);
        Ok(StepOutcome {
            obs: self.observe(),
            reward: p.reward_scale * self.state.vel[0],
            cost,
            done: self.steps >= p.horizon,
        })
    }
}

/// Circle-task constants.
#[derive(Debug, Clone, Copy)]
pub struct PointCircleParams {
    pub dt: f64,
    pub force_scale: f64,
    pub damping: f64,
    pub v_max: f64,
    /// Target orbit radius.
    pub radius: f64,
    /// Cost is charged when `|x| >= x_lim` (boundary inclusive).
    pub x_lim: f64,
    pub horizon: usize,
    pub cost_limit: f64,
}

impl Default for PointCircleParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            force_scale: 5.0,
            damping: 0.25,
            v_max: 5.0,
            radius: 1.0,
            x_lim: 0.7,
            horizon: 250,
            cost_limit: 25.0,
        }
    }
}

/// Orbit the origin without leaving the vertical corridor.
///
/// Reward is the tangential velocity `v . [-y, x]` attenuated by the
/// distance to the target orbit, `1 / (1 + 3 |r_agent - radius|)`; the
/// tangent convention follows the task's screen orientation.
#[derive(Debug, Clone)]
pub struct PointCircleEnv {
    pub params: PointCircleParams,
    pub state: PointState,
    tracker: CostTracker,
    steps: usize,
}

impl PointCircleEnv {
    pub fn new(params: PointCircleParams, common: CommonOverrides) -> Self {
        Self {
            params,
            state: PointState::default(),
            tracker: CostTracker::new(params.cost_limit, common.delta, common.augment),
            steps: 0,
        }
    }

    pub(super) fn from_overrides(ov: &Overrides) -> Self {
        let d = PointCircleParams::default();
        let params = PointCircleParams {
            dt: ov.get("dt", d.dt),
            force_scale: ov.get("force_scale", d.force_scale),
            damping: ov.get("damping", d.damping),
            v_max: ov.get("v_max", d.v_max),
            radius: ov.get("radius", d.radius),
            x_lim: ov.get("x_lim", d.x_lim),
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
        self.tracker.extend_obs(vec![
            self.state.pos[0],
            self.state.pos[1],
            self.state.vel[0],
            self.state.vel[1],
        ])
    }

    pub fn reward_at(state: &PointState, radius: f64) -> f64 {
        let [x, y] = state.pos;
        let tangential = state.vel[0] * (-y) + state.vel[1] * x;
        let r_agent = (x * x + y * y).sqrt();
        tangential / (1.0 + 3.0 * (r_agent - radius).abs())
    }
}

impl Env for PointCircleEnv {
    fn name(&self) -> &'static str {
        "point_circle"
    }

    fn obs_dim(&self) -> usize {
        4 + self.tracker.extra_dims()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn cost_limit(&self) -> f64 {
        self.params.cost_limit
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // Spawn on the orbit at a random angle, at rest.
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        self.state = PointState {
            pos: [
                self.params.radius * angle.cos(),
                self.params.radius * angle.sin(),
            ],
            vel: [0.0, 0.0],
        };
        self.tracker.reset();
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let a = continuous_action(action)?;
        let p = self.params;
        integrate(&mut self.state, a, p.dt, p.force_scale, p.damping, p.v_max);
        self.steps += 1;
        let cost = if self.state.pos[0].abs() >= p.x_lim {
            1.0
        } else {
            0.0
        };
        self.tracker.charge(cost);
        Ok(StepOutcome {
            obs: self.observe(),
            reward: Self::reward_at(&self.state, p.radius),
            cost,
            done: self.steps >= p.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn resting_ball_with_zero_action_earns_nothing() {
        let mut env = PointRunEnv::new(PointRunParams::default(), CommonOverrides::default());
        env.state = PointState::default();
        let out = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn speeding_charges_cost() {
        let mut env = PointRunEnv::new(PointRunParams::default(), CommonOverrides::default());
        env.state.vel = [3.0, 0.0];
        let out = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        // Damping over one step keeps the speed near 3, above the limit.
        assert!(env.speed() > 2.5);
        assert_eq!(out.cost, 1.0);
    }

    #[test]
    fn full_throttle_crosses_the_budget_well_before_the_horizon() {
        let mut env = PointRunEnv::new(PointRunParams::default(), CommonOverrides::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        env.state = PointState::default();
        let mut q = 0.0;
        let mut crossing = None;
        for t in 0..env.horizon() {
            let out = env.step(&Action::Continuous(vec![1.0, 0.0])).unwrap();
            q += out.cost;
            if crossing.is_none() && q > env.cost_limit() {
                crossing = Some(t + 1);
            }
        }
        // Regression value from simulating the frozen constants once.
        assert_eq!(crossing, Some(31));
    }

    #[test]
    fn random_policy_usually_violates_the_run_budget() {
        let mut env = PointRunEnv::new(PointRunParams::default(), CommonOverrides::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut unsafe_episodes = 0;
        let episodes = 40;
        for _ in 0..episodes {
            env.reset(&mut rng);
            let mut q = 0.0;
            for _ in 0..env.horizon() {
                let action = Action::Continuous(vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]);
                q += env.step(&action).unwrap().cost;
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

    #[test]
    fn circle_reward_is_speed_on_the_orbit() {
        let p = PointCircleParams::default();
        let state = PointState {
            pos: [p.radius, 0.0],
            vel: [0.0, 1.7],
        };
        assert!((PointCircleEnv::reward_at(&state, p.radius) - 1.7).abs() < 1e-12);
        let still = PointState {
            pos: [0.3, 0.4],
            vel: [0.0, 0.0],
        };
        assert_eq!(PointCircleEnv::reward_at(&still, p.radius), 0.0);
    }

    #[test]
    fn circle_boundary_cost_is_inclusive() {
        let mut env =
            PointCircleEnv::new(PointCircleParams::default(), CommonOverrides::default());
        // Place exactly on the boundary with no motion; |x| >= x_lim holds.
        env.state = PointState {
            pos: [env.params.x_lim, 0.0],
            vel: [0.0, 0.0],
        };
        let out = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(out.cost, 1.0);
    }
}
