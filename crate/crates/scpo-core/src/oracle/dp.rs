//! Exact constrained planning on the augmented state space.
//!
//! With costs on a finite grid the augmented space `(s, q)` is finite, and
//! backward induction finds the best policy among those that keep every
//! trajectory within budget with probability one. This is the baseline that
//! quantifies what conditioning on the cumulative cost buys.

use std::collections::{HashMap, HashSet};

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::policy::{AugmentedLookupPolicy, TablePolicy};

use super::{Values, DEFAULT_ENUM_CAP};

const GRID_TOL: f64 = 1e-9;

/// Result of the surely-safe backward induction.
#[derive(Debug, Clone)]
pub struct ConstrainedDpSolution {
    /// Deterministic policy over quantized augmented states. When a pair
    /// `(s, q)` is reachable at several times, the earliest time's action is
    /// kept; on the shipped fixtures the optimum is stationary in `(s, q)`.
    pub policy: AugmentedLookupPolicy,
    /// Exact expected undiscounted return of the policy.
    pub expected_return: f64,
    /// Exact expected final cumulative cost.
    pub expected_cost: f64,
    /// The single optimal trajectory `(state, q, action)` when both the
    /// dynamics and the chosen actions are deterministic.
    pub optimal_trajectory: Option<Vec<(usize, i64, usize)>>,
}

fn quantize_costs(cmdp: &TabularCmdp, resolution: f64) -> Result<Vec<i64>> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidConfig("grid resolution must be > 0".into()));
    }
    cmdp.cost
        .iter()
        .map(|&c| {
            let q = (c / resolution).round();
            if (q * resolution - c).abs() > GRID_TOL {
                Err(Error::QuantizationRequired(format!(
                    "cost {c} is not a multiple of {resolution}"
                )))
            } else {
                Ok(q as i64)
            }
        })
        .collect()
}

/// Layered forward-reachable augmented states, one set per time step.
fn reachable_layers(
    cmdp: &TabularCmdp,
    qcost: &[i64],
) -> Vec<HashSet<(usize, i64)>> {
    let mut layers: Vec<HashSet<(usize, i64)>> = Vec::with_capacity(cmdp.horizon_t);
    let mut current = HashSet::new();
    current.insert((cmdp.initial_state, qcost[cmdp.initial_state]));
    layers.push(current);
    for t in 1..cmdp.horizon_t {
        let mut next = HashSet::new();
        for &(s, q) in &layers[t - 1] {
            for a in 0..cmdp.n_actions {
                for s_next in 0..cmdp.n_states {
                    if cmdp.p(s, a, s_next) > 0.0 {
                        next.insert((s_next, q + qcost[s_next]));
                    }
                }
            }
        }
        layers.push(next);
    }
    layers
}

/// Size of the augmented state space at the given cost resolution:
/// base states times the number of distinct reachable cumulative-cost values.
pub fn augmented_state_count(cmdp: &TabularCmdp, resolution: f64) -> Result<usize> {
    let qcost = quantize_costs(cmdp, resolution)?;
    let layers = reachable_layers(cmdp, &qcost);
    let mut q_values = HashSet::new();
    for layer in &layers {
        for &(_, q) in layer {
            q_values.insert(q);
        }
    }
    Ok(cmdp.n_states * q_values.len())
}

/// Backward induction maximizing expected return over policies whose every
/// trajectory stays within budget.
pub fn constrained_dp_solve(
    cmdp: &TabularCmdp,
    resolution: f64,
) -> Result<ConstrainedDpSolution> {
    let qcost = quantize_costs(cmdp, resolution)?;
    let layers = reachable_layers(cmdp, &qcost);
    let safe = |q: i64| (q as f64) * resolution <= cmdp.budget_c0 + GRID_TOL;

    // feas[t]: feasible augmented states with their optimal value and action.
    let horizon = cmdp.horizon_t;
    let mut feas: Vec<HashMap<(usize, i64), (f64, usize)>> = vec![HashMap::new(); horizon];
    for t in (0..horizon).rev() {
        let mut level = HashMap::new();
        for &(s, q) in &layers[t] {
            if !safe(q) {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for a in 0..cmdp.n_actions {
                let mut value = cmdp.r(s, a);
                let mut ok = true;
                if t + 1 < horizon {
                    for s_next in 0..cmdp.n_states {
                        let p = cmdp.p(s, a, s_next);
                        if p == 0.0 {
                            continue;
                        }
                        match feas[t + 1].get(&(s_next, q + qcost[s_next])) {
                            Some(&(v, _)) => value += p * v,
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                }
                if ok && best.map_or(true, |(bv, _)| value > bv) {
                    best = Some((value, a));
                }
            }
            if let Some(b) = best {
                level.insert((s, q), b);
            }
        }
        feas[t] = level;
    }

    let init = (cmdp.initial_state, qcost[cmdp.initial_state]);
    let &(expected_return, _) = feas[0].get(&init).ok_or_else(|| {
        Error::Infeasible("no policy keeps every trajectory within budget".into())
    })?;

    // Earliest-time action per (s, q).
    let mut actions: HashMap<(usize, i64), usize> = HashMap::new();
    for level in &feas {
        for (&key, &(_, a)) in level {
            actions.entry(key).or_insert(a);
        }
    }

    // Forward pass for the exact expected final cost.
    let mut dist: HashMap<(usize, i64), f64> = HashMap::new();
    dist.insert(init, 1.0);
    for t in 0..horizon {
        if t + 1 == horizon {
            break;
        }
        let mut next: HashMap<(usize, i64), f64> = HashMap::new();
        for (&(s, q), &prob) in &dist {
            let a = feas[t][&(s, q)].1;
            for s_next in 0..cmdp.n_states {
                let p = cmdp.p(s, a, s_next);
                if p == 0.0 {
                    continue;
                }
                *next.entry((s_next, q + qcost[s_next])).or_insert(0.0) += prob * p;
            }
        }
        dist = next;
    }
    let expected_cost: f64 = dist
        .iter()
        .map(|(&(_, q), &p)| p * (q as f64) * resolution)
        .sum();

    // Deterministic optimal trajectory, when one exists.
    let mut optimal_trajectory = Some(Vec::with_capacity(horizon));
    let (mut s, mut q) = init;
    for (t, feas_t) in feas.iter().enumerate() {
        let a = feas_t[&(s, q)].1;
        if let Some(traj) = optimal_trajectory.as_mut() {
            traj.push((s, q, a));
        }
        if t + 1 == horizon {
            break;
        }
        let successors: Vec<usize> = (0..cmdp.n_states)
            .filter(|&s_next| cmdp.p(s, a, s_next) > 0.0)
            .collect();
        if successors.len() == 1 && (cmdp.p(s, a, successors[0]) - 1.0).abs() <= 1e-12 {
            s = successors[0];
            q += qcost[s];
        } else {
            optimal_trajectory = None;
            break;
        }
    }

    Ok(ConstrainedDpSolution {
        policy: AugmentedLookupPolicy {
            actions,
            n_actions: cmdp.n_actions,
            resolution,
            fallback: 0,
        },
        expected_return,
        expected_cost,
        optimal_trajectory,
    })
}

/// Best return over stationary policies of the *unaugmented* chain that are
/// surely safe, scanning `pi(a1 | vary_state) = p` over a probability grid.
///
/// Only two-action CMDPs are supported; every other state acts with action 0.
/// Returns `(best_p, best_return)`.
pub fn best_surely_safe_stationary(
    cmdp: &TabularCmdp,
    delta: f64,
    grid_step: f64,
    vary_state: usize,
) -> Result<(f64, f64)> {
    if cmdp.n_actions != 2 {
        return Err(Error::InvalidConfig(
            "stationary grid scan expects exactly two actions".into(),
        ));
    }
    let n = (1.0 / grid_step).round() as usize;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=n {
        let p = i as f64 * grid_step;
        let mut rows = vec![vec![1.0, 0.0]; cmdp.n_states];
        rows[vary_state] = vec![1.0 - p, p];
        let pi = TablePolicy::new(rows);
        let vals = Values::new(cmdp, &pi, delta, DEFAULT_ENUM_CAP);
        // Sure safety computes to exactly 1 on the grid; the margin only
        // absorbs float noise, not genuinely unsafe branches.
        if vals.vc0()? < 1.0 - 1e-12 {
            continue;
        }
        let ret = vals.vr0(1.0, super::KPower::Finite(0))?;
        if best.map_or(true, |(_, br)| ret > br) {
            best = Some((p, ret));
        }
    }
    best.ok_or_else(|| Error::Infeasible("no surely-safe stationary policy on the grid".into()))
}
