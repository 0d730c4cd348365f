//! Seeded random CMDP and policy generators for the fuzz and theorem suites.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::cmdp::TabularCmdp;
use crate::policy::TablePolicy;

/// Master seed recorded for every randomized suite.
pub const MASTER_SEED: u64 = 20240601;

/// Shape limits for generated instances.
#[derive(Debug, Clone, Copy)]
pub struct RandomCmdpConfig {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
}

impl Default for RandomCmdpConfig {
    fn default() -> Self {
        Self {
            max_states: 4,
            max_actions: 3,
            max_horizon: 5,
        }
    }
}

/// Stable per-instance seed derived from a master seed (splitmix64 step).
pub fn instance_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Samples a Dirichlet(1, ..., 1) point via normalized exponentials.
fn dirichlet_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random_range(0.0..1.0f64)).ln())
        .collect();
    let sum: f64 = row.iter().sum();
    for x in &mut row {
        *x /= sum;
    }
    // Force an exact simplex under the 1e-12 invariant.
    let correction: f64 = row.iter().sum::<f64>();
    row[n - 1] += 1.0 - correction;
    row
}

/// Random small CMDP: Dirichlet transition rows, rewards uniform in `[0, 1]`,
/// costs in `{0, 1}`, budget in `{1, 2}`, horizon between 2 and the cap.
pub fn random_cmdp(rng: &mut ChaCha8Rng, cfg: &RandomCmdpConfig) -> TabularCmdp {
    let n_states = rng.random_range(2..=cfg.max_states);
    let n_actions = rng.random_range(2..=cfg.max_actions);
    let horizon = rng.random_range(2..=cfg.max_horizon);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet_row(rng, n_states));
    }
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let cost: Vec<f64> = (0..n_states)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        .collect();
    let budget = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
    let initial_state = rng.random_range(0..n_states);
    TabularCmdp::new(
        n_states,
        n_actions,
        transition,
        reward,
        cost,
        budget,
        horizon,
        initial_state,
    )
    .expect("generated CMDP must be valid")
}

/// Random strictly-positive tabular policy (Dirichlet rows smoothed toward
/// uniform so policy ratios stay bounded).
pub fn random_policy(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> TablePolicy {
    let rows = (0..n_states)
        .map(|_| {
            let raw = dirichlet_row(rng, n_actions);
            let uniform = 1.0 / n_actions as f64;
            raw.iter().map(|x| 0.8 * x + 0.2 * uniform).collect()
        })
        .collect();
    TablePolicy::new(rows)
}
