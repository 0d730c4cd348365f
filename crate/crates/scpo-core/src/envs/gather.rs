//! Simplified planar collection task on a grid.
//!
//! Blue and red items are scattered over a small grid at episode start; the
//! agent moves one cell at a time, collecting whatever it lands on. Blue
//! items pay a large reward, red items charge a unit cost against a budget
//! so tight that a single red pickup is already unsafe.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Action, ActionSpace};

use super::{CommonOverrides, CostTracker, Env, Overrides, StepOutcome};

#[derive(Debug, Clone, Copy)]
pub struct GatherParams {
    pub grid_size: usize,
    pub n_blue: usize,
    pub n_red: usize,
    pub blue_reward: f64,
    pub red_cost: f64,
    pub horizon: usize,
    pub cost_limit: f64,
}

impl Default for GatherParams {
    fn default() -> Self {
        Self {
            grid_size: 8,
            n_blue: 6,
            n_red: 4,
            blue_reward: 10.0,
            red_cost: 1.0,
            horizon: 250,
            cost_limit: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatherGridEnv {
    pub params: GatherParams,
    pub agent: (usize, usize),
    pub blues: Vec<(usize, usize)>,
    pub reds: Vec<(usize, usize)>,
    tracker: CostTracker,
    steps: usize,
}

impl GatherGridEnv {
    pub fn new(params: GatherParams, common: CommonOverrides) -> Self {
        assert!(
            params.n_blue + params.n_red + 1 <= params.grid_size * params.grid_size,
            "grid too small for the requested items"
        );
        Self {
            params,
            agent: (0, 0),
            blues: Vec::new(),
            reds: Vec::new(),
            tracker: CostTracker::new(params.cost_limit, common.delta, common.augment),
            steps: 0,
        }
    }

    pub(super) fn from_overrides(ov: &Overrides) -> Self {
        let d = GatherParams::default();
        let params = GatherParams {
            grid_size: ov.get("grid_size", d.grid_size as f64) as usize,
            n_blue: ov.get("n_blue", d.n_blue as f64) as usize,
            n_red: ov.get("n_red", d.n_red as f64) as usize,
            blue_reward: ov.get("blue_reward", d.blue_reward),
            red_cost: ov.get("red_cost", d.red_cost),
            horizon: ov.get("horizon", d.horizon as f64) as usize,
            cost_limit: ov.get("cost_limit", d.cost_limit),
        };
        let common = CommonOverrides {
            augment: ov.get_bool("augment", true),
            delta: ov.get("delta", crate::cmdp::DEFAULT_DELTA),
        };
        Self::new(params, common)
    }

    fn nearest_delta(&self, items: &[(usize, usize)]) -> [f64; 2] {
        let scale = (self.params.grid_size - 1).max(1) as f64;
        items
            .iter()
            .map(|&(x, y)| {
                (
                    x as f64 - self.agent.0 as f64,
                    y as f64 - self.agent.1 as f64,
                )
            })
            .min_by(|a, b| {
                let da = a.0 * a.0 + a.1 * a.1;
                let db = b.0 * b.0 + b.1 * b.1;
                da.partial_cmp(&db).unwrap()
            })
            .map(|(dx, dy)| [dx / scale, dy / scale])
            .unwrap_or([0.0, 0.0])
    }

    fn observe(&self) -> Vec<f64> {
        let scale = (self.params.grid_size - 1).max(1) as f64;
        let blue = self.nearest_delta(&self.blues);
        let red = self.nearest_delta(&self.reds);
        self.tracker.extend_obs(vec![
            self.agent.0 as f64 / scale,
            self.agent.1 as f64 / scale,
            blue[0],
            blue[1],
            red[0],
            red[1],
        ])
    }
}

impl Env for GatherGridEnv {
    fn name(&self) -> &'static str {
        "gather_grid"
    }

    fn obs_dim(&self) -> usize {
        6 + self.tracker.extra_dims()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(4)
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn cost_limit(&self) -> f64 {
        self.params.cost_limit
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let g = self.params.grid_size;
        let mut free: Vec<(usize, usize)> = (0..g * g).map(|i| (i % g, i / g)).collect();
        // Seeded partial shuffle picks agent and item cells without overlap.
        let total = 1 + self.params.n_blue + self.params.n_red;
        for i in 0..total {
            let j = rng.random_range(i..free.len());
            free.swap(i, j);
        }
        self.agent = free[0];
        self.blues = free[1..1 + self.params.n_blue].to_vec();
        self.reds = free[1 + self.params.n_blue..total].to_vec();
        self.tracker.reset();
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let dir = match action {
            Action::Discrete(a) if *a < 4 => *a,
            Action::Discrete(a) => {
                return Err(Error::InvalidConfig(format!("action {a} out of range")))
            }
            Action::Continuous(_) => {
                return Err(Error::InvalidConfig(
                    "gather task takes discrete actions".into(),
                ))
            }
        };
        let g = self.params.grid_size;
        let (x, y) = self.agent;
        self.agent = match dir {
            0 => (x, y.saturating_sub(1)),
            1 => (x, (y + 1).min(g - 1)),
            2 => (x.saturating_sub(1), y),
            _ => ((x + 1).min(g - 1), y),
        };
        self.steps += 1;
        let mut reward = 0.0;
        let mut cost = 0.0;
        if let Some(i) = self.blues.iter().position(|&c| c == self.agent) {
            self.blues.swap_remove(i);
            reward = self.params.blue_reward;
        } else if let Some(i) = self.reds.iter().position(|&c| c == self.agent) {
            self.reds.swap_remove(i);
            cost = self.params.red_cost;
        }
        self.tracker.charge(cost);
        Ok(StepOutcome {
            obs: self.observe(),
            reward,
            cost,
            done: self.steps >= self.params.horizon,
        })
    }
}
