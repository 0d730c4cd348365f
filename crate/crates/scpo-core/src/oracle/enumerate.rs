//! Exhaustive trajectory enumeration.
//!
//! This is the slow, direct route: expand every action/successor branch with
//! nonzero probability and return the full distribution over length-`horizon`
//! trajectories. The memoized recursions in [`super::Values`] must agree with
//! sums over this distribution; several identity checks use both routes on
//! purpose.

use crate::cmdp::{q_clip, safety_flag, Step, TabularCmdp, Trajectory};
use crate::error::{Error, Result};
use crate::policy::Policy;

/// Exact distribution over trajectories.
#[derive(Debug, Clone)]
pub struct EnumeratedDistribution {
    /// Trajectories paired with their probabilities; probabilities are
    /// strictly positive and sum to one within 1e-10.
    pub entries: Vec<(Trajectory, f64)>,
}

impl EnumeratedDistribution {
    fn validated(entries: Vec<(Trajectory, f64)>) -> Result<Self> {
        let sum: f64 = entries.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidCmdp(format!(
                "enumerated probabilities sum to {sum}"
            )));
        }
        if entries.iter().any(|(_, p)| *p <= 0.0) {
            return Err(Error::InvalidCmdp(
                "enumerated distribution contains a nonpositive probability".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }
}

struct Expander<'a> {
    cmdp: &'a TabularCmdp,
    policy: &'a dyn Policy,
    delta: f64,
    cap: u64,
    leaves: u64,
    out: Vec<(Trajectory, f64)>,
}

impl Expander<'_> {
    fn expand(
        &mut self,
        state: usize,
        q_before: f64,
        depth: usize,
        horizon: usize,
        forced_action: Option<usize>,
        prefix: &mut Vec<Step>,
        prob: f64,
    ) -> Result<()> {
        if depth == horizon {
            self.leaves += 1;
            if self.leaves > self.cap {
                return Err(Error::BudgetExceeded {
                    leaves: self.leaves,
                    cap: self.cap,
                });
            }
            self.out.push((
                Trajectory::from_steps_offset(
                    prefix.clone(),
                    self.cmdp.budget_c0,
                    self.delta,
                    q_before - prefix.iter().map(|s| s.cost).sum::<f64>(),
                ),
                prob,
            ));
            return Ok(());
        }
        let q = q_before + self.cmdp.cost[state];
        let probs = match forced_action {
            Some(a) => {
                let mut v = vec![0.0; self.cmdp.n_actions];
                v[a] = 1.0;
                v
            }
            None => self.policy.action_probs(state, q),
        };
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonNormalizedPolicy { state, sum });
        }
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            prefix.push(Step {
                state,
                action: a,
                reward: self.cmdp.r(state, a),
                cost: self.cmdp.cost[state],
            });
            for s_next in 0..self.cmdp.n_states {
                let pt = self.cmdp.p(state, a, s_next);
                if pt == 0.0 {
                    continue;
                }
                self.expand(s_next, q, depth + 1, horizon, None, prefix, prob * pa * pt)?;
            }
            prefix.pop();
        }
        Ok(())
    }
}

/// Enumerates the exact distribution over length-`horizon` trajectories from
/// `start_state`, with no cost accrued before entry.
pub fn enumerate(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    start_state: usize,
    horizon: usize,
    delta: f64,
    cap: u64,
) -> Result<EnumeratedDistribution> {
    enumerate_from(cmdp, policy, start_state, 0.0, horizon, None, delta, cap)
}

/// Full-control enumeration: prior accrued cost, optional forced first action.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_from(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    start_state: usize,
    q_prior: f64,
    horizon: usize,
    forced_first_action: Option<usize>,
    delta: f64,
    cap: u64,
) -> Result<EnumeratedDistribution> {
    let mut ex = Expander {
        cmdp,
        policy,
        delta,
        cap,
        leaves: 0,
        out: Vec::new(),
    };
    let mut prefix = Vec::with_capacity(horizon);
    ex.expand(
        start_state,
        q_prior,
        0,
        horizon,
        forced_first_action,
        &mut prefix,
        1.0,
    )?;
    EnumeratedDistribution::validated(ex.out)
}

/// Streaming enumeration of the safe probability mass: walks the same tree
/// as [`enumerate`] but accumulates `sum_tau P[tau] f(tau)` directly, pruning
/// subtrees whose flag product is already zero (costs only accumulate, so an
/// over-budget prefix can never recover).
#[allow(clippy::too_many_arguments)]
pub fn safe_mass(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    start_state: usize,
    q_prior: f64,
    horizon: usize,
    forced_first_action: Option<usize>,
    delta: f64,
    cap: u64,
) -> Result<f64> {
    fn rec(
        cmdp: &TabularCmdp,
        policy: &dyn Policy,
        delta: f64,
        cap: u64,
        nodes: &mut u64,
        state: usize,
        q_before: f64,
        depth: usize,
        horizon: usize,
        forced: Option<usize>,
    ) -> Result<f64> {
        if depth == horizon {
            return Ok(1.0);
        }
        *nodes += 1;
        if *nodes > cap {
            return Err(Error::BudgetExceeded {
                leaves: *nodes,
                cap,
            });
        }
        let q = q_before + cmdp.cost[state];
        if !safety_flag(q_clip(q, cmdp.budget_c0, delta)) {
            return Ok(0.0);
        }
        let probs = match forced {
            Some(a) => {
                let mut v = vec![0.0; cmdp.n_actions];
                v[a] = 1.0;
                v
            }
            None => policy.action_probs(state, q),
        };
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonNormalizedPolicy { state, sum });
        }
        let mut acc = 0.0;
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for s_next in 0..cmdp.n_states {
                let pt = cmdp.p(state, a, s_next);
                if pt == 0.0 {
                    continue;
                }
                acc += pa
                    * pt
                    * rec(
                        cmdp, policy, delta, cap, nodes, s_next, q, depth + 1, horizon, None,
                    )?;
            }
        }
        Ok(acc)
    }
    let mut nodes = 0;
    rec(
        cmdp,
        policy,
        delta,
        cap,
        &mut nodes,
        start_state,
        q_prior,
        0,
        horizon,
        forced_first_action,
    )
}

/// Safety value by direct enumeration: `sum_tau P[tau] f(tau)`.
pub fn exact_vc(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    start_state: usize,
    delta: f64,
    cap: u64,
) -> Result<f64> {
    safe_mass(
        cmdp,
        policy,
        start_state,
        0.0,
        cmdp.horizon_t,
        None,
        delta,
        cap,
    )
}

/// Safety Q-value by direct enumeration with the first action forced.
pub fn exact_qc(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    start_state: usize,
    action: usize,
    delta: f64,
    cap: u64,
) -> Result<f64> {
    safe_mass(
        cmdp,
        policy,
        start_state,
        0.0,
        cmdp.horizon_t,
        Some(action),
        delta,
        cap,
    )
}

/// Probability mass of safe trajectories: `sum_tau P[tau] f(tau)`.
pub fn safe_probability(dist: &EnumeratedDistribution) -> Result<f64> {
    let mut total = 0.0;
    for (traj, p) in &dist.entries {
        if crate::cmdp::trajectory_safety(traj)? {
            total += p;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::DEFAULT_DELTA;
    use crate::policy::{TablePolicy, UniformPolicy};

    fn deterministic_chain() -> TabularCmdp {
        TabularCmdp::new(
            2,
            1,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            1.0,
            4,
            0,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_chain_has_single_leaf() {
        let cmdp = deterministic_chain();
        let pi = UniformPolicy::new(1);
        let dist = enumerate(&cmdp, &pi, 0, 4, DEFAULT_DELTA, 1000).unwrap();
        assert_eq!(dist.entries.len(), 1);
        assert_eq!(dist.entries[0].1, 1.0);
    }

    #[test]
    fn uniform_two_action_tree_has_uniform_leaves() {
        // Deterministic transitions, so leaves are indexed by action strings.
        let cmdp = TabularCmdp::new(
            2,
            2,
            vec![
                0.0, 1.0, // s0 a0
                1.0, 0.0, // s0 a1
                1.0, 0.0, // s1 a0
                0.0, 1.0, // s1 a1
            ],
            vec![0.0; 4],
            vec![0.0, 0.0],
            1.0,
            3,
            0,
        )
        .unwrap();
        let pi = UniformPolicy::new(2);
        let dist = enumerate(&cmdp, &pi, 0, 3, DEFAULT_DELTA, 1000).unwrap();
        assert_eq!(dist.entries.len(), 8);
        for (_, p) in &dist.entries {
            assert!((p - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_error_when_cap_exceeded() {
        let cmdp = TabularCmdp::new(
            2,
            2,
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![0.0; 4],
            vec![0.0, 0.0],
            1.0,
            5,
            0,
        )
        .unwrap();
        let pi = UniformPolicy::new(2);
        assert!(matches!(
            enumerate(&cmdp, &pi, 0, 5, DEFAULT_DELTA, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn all_costs_zero_is_fully_safe() {
        let cmdp = deterministic_chain();
        let pi = TablePolicy::new(vec![vec![1.0], vec![1.0]]);
        assert_eq!(exact_vc(&cmdp, &pi, 0, DEFAULT_DELTA, 1000).unwrap(), 1.0);
    }
}
