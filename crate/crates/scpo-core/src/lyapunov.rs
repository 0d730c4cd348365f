//! Lyapunov verification lab for first-hitting constrained chains.
//!
//! A hitting CMDP is a finite chain with designated absorbing terminal states
//! and a per-state constraint cost `d` that stops accruing at the terminal.
//! A Lyapunov candidate is a nonnegative state function that dominates its
//! own constrained Bellman image, vanishes on terminals, and starts below
//! the threshold; such a function upper-bounds the expected cumulative
//! constraint cost, and this module checks those properties numerically.

use std::collections::HashMap;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::policy::TablePolicy;

/// Membership and inequality tolerance for the candidate-set checks.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// First-hitting constrained chain.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `(x, a, x')` transition probabilities.
    pub transition: Vec<f64>,
    /// Per-state constraint cost; zero on terminals.
    pub d: Vec<f64>,
    pub terminal: Vec<bool>,
    pub x0: usize,
    pub d0: f64,
}

impl HittingCmdp {
    #[inline]
    pub fn p(&self, x: usize, a: usize, x_next: usize) -> f64 {
        self.transition[(x * self.n_actions + a) * self.n_states + x_next]
    }

    pub fn validate(&self) -> Result<()> {
        if self.transition.len() != self.n_states * self.n_actions * self.n_states {
            return Err(Error::InvalidCmdp("transition tensor size".into()));
        }
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let sum: f64 = (0..self.n_states).map(|x2| self.p(x, a, x2)).sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidCmdp(format!(
                        "row (x={x}, a={a}) sums to {sum}"
                    )));
                }
                if self.terminal[x] && self.p(x, a, x) < 1.0 - 1e-12 {
                    return Err(Error::InvalidCmdp(format!(
                        "terminal state {x} is not absorbing"
                    )));
                }
            }
            if self.terminal[x] && self.d[x] != 0.0 {
                return Err(Error::InvalidCmdp(format!(
                    "terminal state {x} has nonzero constraint cost"
                )));
            }
            if self.d[x] < 0.0 {
                return Err(Error::InvalidCmdp("negative constraint cost".into()));
            }
        }
        Ok(())
    }
}

/// Nonnegative state function, zero on terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCandidate {
    pub values: Vec<f64>,
}

impl LyapunovCandidate {
    pub fn validate(&self, cmdp: &HittingCmdp) -> Result<()> {
        if self.values.len() != cmdp.n_states {
            return Err(Error::DimensionMismatch {
                expected: cmdp.n_states,
                got: self.values.len(),
            });
        }
        for (x, &v) in self.values.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::InvalidConfig(format!("L({x}) = {v} is negative")));
            }
            if cmdp.terminal[x] && v != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "L({x}) = {v} on a terminal state"
                )));
            }
        }
        Ok(())
    }
}

/// Generic Bellman operator
/// `T[V](x) = sum_a pi(a|x) [h(x, a) + sum_x' P(x'|x, a) V(x')]`.
pub fn bellman_apply<H>(cmdp: &HittingCmdp, policy: &TablePolicy, h: H, v: &[f64]) -> Vec<f64>
where
    H: Fn(usize, usize) -> f64,
{
    (0..cmdp.n_states)
        .map(|x| {
            policy.rows[x]
                .iter()
                .enumerate()
                .map(|(a, &pa)| {
                    if pa == 0.0 {
                        return 0.0;
                    }
                    let cont: f64 = (0..cmdp.n_states)
                        .map(|x2| cmdp.p(x, a, x2) * v[x2])
                        .sum();
                    pa * (h(x, a) + cont)
                })
                .sum()
        })
        .collect()
}

/// Bellman operator with the constraint cost as the per-step term; terminal
/// states map to zero so the candidate space is preserved.
pub fn bellman_apply_d(cmdp: &HittingCmdp, policy: &TablePolicy, v: &[f64]) -> Vec<f64> {
    let mut out = bellman_apply(cmdp, policy, |x, _| cmdp.d[x], v);
    for (x, o) in out.iter_mut().enumerate() {
        if cmdp.terminal[x] {
            *o = 0.0;
        }
    }
    out
}

/// Exact expected cumulative constraint cost until hitting a terminal state,
/// by solving `(I - P_pi) D = d` on the non-terminal block.
pub fn expected_cumulative_d(cmdp: &HittingCmdp, policy: &TablePolicy) -> Result<Vec<f64>> {
    let live: Vec<usize> = (0..cmdp.n_states).filter(|&x| !cmdp.terminal[x]).collect();
    let index: HashMap<usize, usize> = live.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let n = live.len();
    // Dense system with partial pivoting; instances are tiny.
    let mut m = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (i, &x) in live.iter().enumerate() {
        rhs[i] = cmdp.d[x];
        m[i * n + i] += 1.0;
        for (a, &pa) in policy.rows[x].iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (&x2, &j) in index.iter() {
                m[i * n + j] -= pa * cmdp.p(x, a, x2);
            }
        }
    }
    let sol = solve_dense(&mut m, &mut rhs, n)?;
    let mut out = vec![0.0; cmdp.n_states];
    for (i, &x) in live.iter().enumerate() {
        out[x] = sol[i];
    }
    Ok(out)
}

fn solve_dense(m: &mut [f64], rhs: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| {
                m[a * n + col]
                    .abs()
                    .partial_cmp(&m[b * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if m[pivot * n + col].abs() < 1e-12 {
            return Err(Error::Infeasible(
                "policy does not reach the terminal state; expected cost diverges".into(),
            ));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut sol = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row * n + k] * sol[k];
        }
        sol[row] = acc / m[row * n + row];
    }
    Ok(sol)
}

/// Checks the three membership conditions of the Lyapunov set; on failure
/// reports the first violated state.
pub fn is_lyapunov(
    cmdp: &HittingCmdp,
    pi_b: &TablePolicy,
    candidate: &LyapunovCandidate,
) -> Result<(bool, Option<usize>)> {
    candidate.validate(cmdp)?;
    let image = bellman_apply_d(cmdp, pi_b, &candidate.values);
    for x in 0..cmdp.n_states {
        if cmdp.terminal[x] {
            continue;
        }
        if image[x] > candidate.values[x] + MEMBERSHIP_TOL {
            return Ok((false, Some(x)));
        }
    }
    if candidate.values[cmdp.x0] > cmdp.d0 + MEMBERSHIP_TOL {
        return Ok((false, Some(cmdp.x0)));
    }
    Ok((true, None))
}

/// State marginals `P[X_t = x]` for `t = 0 ..= t_max`.
fn marginals(cmdp: &HittingCmdp, policy: &TablePolicy, t_max: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(t_max + 1);
    let mut mu = vec![0.0; cmdp.n_states];
    mu[cmdp.x0] = 1.0;
    out.push(mu.clone());
    for _ in 0..t_max {
        let mut next = vec![0.0; cmdp.n_states];
        for (x, &px) in mu.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (a, &pa) in policy.rows[x].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (x2, nx) in next.iter_mut().enumerate() {
                    *nx += px * pa * cmdp.p(x, a, x2);
                }
            }
        }
        mu = next;
        out.push(mu.clone());
    }
    out
}

/// Finite-horizon upper-bound inequality: for every `T <= t_max`,
/// `sum_{t<=T} E[d(X_t)] + E[L(X_{T+1})] <= L(x0)`. Returns the minimum slack.
pub fn check_upper_bound_lemma(
    cmdp: &HittingCmdp,
    policy: &TablePolicy,
    candidate: &LyapunovCandidate,
    t_max: usize,
) -> Result<f64> {
    candidate.validate(cmdp)?;
    let mu = marginals(cmdp, policy, t_max + 1);
    let l0 = candidate.values[cmdp.x0];
    let mut running_d = 0.0;
    let mut min_slack = f64::INFINITY;
    for t in 0..=t_max {
        running_d += mu[t]
            .iter()
            .zip(&cmdp.d)
            .map(|(p, d)| p * d)
            .sum::<f64>();
        let tail: f64 = mu[t + 1]
            .iter()
            .zip(&candidate.values)
            .map(|(p, l)| p * l)
            .sum();
        min_slack = min_slack.min(l0 - (running_d + tail));
    }
    Ok(min_slack)
}

/// Occupancy bound: `max_t P[X_t = x] L(x) <= d0` for every state. Returns
/// the minimum slack over states and `t <= t_max`.
pub fn occupancy_bound_slack(
    cmdp: &HittingCmdp,
    policy: &TablePolicy,
    candidate: &LyapunovCandidate,
    t_max: usize,
) -> f64 {
    let mu = marginals(cmdp, policy, t_max);
    let mut min_slack = f64::INFINITY;
    for layer in &mu {
        for (x, &p) in layer.iter().enumerate() {
            min_slack = min_slack.min(cmdp.d0 - p * candidate.values[x]);
        }
    }
    min_slack
}

/// Monotone contraction: `T^k[L] <= T^(k-1)[L]` pointwise for `k <= k_max`.
/// Returns the minimum pointwise slack across iterations.
pub fn monotone_contraction_slack(
    cmdp: &HittingCmdp,
    policy: &TablePolicy,
    candidate: &LyapunovCandidate,
    k_max: usize,
) -> f64 {
    let mut prev = candidate.values.clone();
    let mut min_slack = f64::INFINITY;
    for _ in 0..k_max {
        let next = bellman_apply_d(cmdp, policy, &prev);
        for (p, n) in prev.iter().zip(&next) {
            min_slack = min_slack.min(p - n);
        }
        prev = next;
    }
    min_slack
}

/// Deterministic-case relaxed induced set: splices the optimal actions over
/// the supplied trajectory states into the feasible base policy and checks
/// `T[L](x) <= max(d0, L(x))` everywhere, with `L` the base policy's exact
/// expected cumulative cost. Returns the violated state on failure.
pub fn relaxed_induced_set_check(
    cmdp: &HittingCmdp,
    optimal_actions: &HashMap<usize, usize>,
    pi_b: &TablePolicy,
) -> Result<(bool, Option<usize>)> {
    let l = LyapunovCandidate {
        values: expected_cumulative_d(cmdp, pi_b)?,
    };
    let (member, witness) = is_lyapunov(cmdp, pi_b, &l)?;
    if !member {
        return Err(Error::Infeasible(format!(
            "base policy is not feasible (witness state {witness:?})"
        )));
    }
    let mut rows = pi_b.rows.clone();
    for (&x, &a) in optimal_actions {
        let mut row = vec![0.0; cmdp.n_actions];
        row[a] = 1.0;
        rows[x] = row;
    }
    let spliced = TablePolicy::new(rows);
    let image = bellman_apply_d(cmdp, &spliced, &l.values);
    for x in 0..cmdp.n_states {
        if cmdp.terminal[x] {
            continue;
        }
        if image[x] > cmdp.d0.max(l.values[x]) + MEMBERSHIP_TOL {
            return Ok((false, Some(x)));
        }
    }
    Ok((true, None))
}

/// Quotients the augmented chain `(s, q)` of a finite-horizon CMDP into a
/// hitting CMDP: cumulative cost saturates one grid step above the budget
/// (constraint dynamics do not depend on `q` beyond the budget), and the
/// given base states become absorbing terminals.
pub fn hitting_from_augmented(
    cmdp: &TabularCmdp,
    resolution: f64,
    terminal_base: &[usize],
) -> Result<(HittingCmdp, HashMap<(usize, i64), usize>)> {
    let qcost: Vec<i64> = cmdp
        .cost
        .iter()
        .map(|&c| {
            let q = (c / resolution).round();
            if (q * resolution - c).abs() > 1e-9 {
                Err(Error::QuantizationRequired(format!(
                    "cost {c} is not a multiple of {resolution}"
                )))
            } else {
                Ok(q as i64)
            }
        })
        .collect::<Result<_>>()?;
    let ceiling = (cmdp.budget_c0 / resolution).floor() as i64 + 1;
    let clamp = |q: i64| q.min(ceiling);

    // Breadth-first closure over saturated `(s, q)` pairs.
    let start = (cmdp.initial_state, clamp(qcost[cmdp.initial_state]));
    let mut index: HashMap<(usize, i64), usize> = HashMap::new();
    let mut states = vec![start];
    index.insert(start, 0);
    let mut head = 0;
    while head < states.len() {
        let (s, q) = states[head];
        head += 1;
        if terminal_base.contains(&s) {
            continue;
        }
        for a in 0..cmdp.n_actions {
            for s_next in 0..cmdp.n_states {
                if cmdp.p(s, a, s_next) == 0.0 {
                    continue;
                }
                let key = (s_next, clamp(q + qcost[s_next]));
                if !index.contains_key(&key) {
                    index.insert(key, states.len());
                    states.push(key);
                }
            }
        }
    }

    let n = states.len();
    let mut transition = vec![0.0; n * cmdp.n_actions * n];
    let mut d = vec![0.0; n];
    let mut terminal = vec![false; n];
    for (i, &(s, q)) in states.iter().enumerate() {
        let is_term = terminal_base.contains(&s);
        terminal[i] = is_term;
        d[i] = if is_term { 0.0 } else { cmdp.cost[s] };
        for a in 0..cmdp.n_actions {
            if is_term {
                transition[(i * cmdp.n_actions + a) * n + i] = 1.0;
                continue;
            }
            for s_next in 0..cmdp.n_states {
                let p = cmdp.p(s, a, s_next);
                if p == 0.0 {
                    continue;
                }
                let j = index[&(s_next, clamp(q + qcost[s_next]))];
                transition[(i * cmdp.n_actions + a) * n + j] += p;
            }
        }
    }
    let hitting = HittingCmdp {
        n_states: n,
        n_actions: cmdp.n_actions,
        transition,
        d,
        terminal,
        x0: 0,
        d0: cmdp.budget_c0,
    };
    hitting.validate()?;
    Ok((hitting, index))
}

/// Random absorbing hitting CMDP for the verification batch: Dirichlet rows
/// blended with a fixed escape mass to the terminal, uniform constraint
/// costs.
pub fn random_hitting_cmdp(rng: &mut ChaCha8Rng, max_live: usize, max_actions: usize) -> HittingCmdp {
    let live = rng.random_range(2..=max_live);
    let n_actions = rng.random_range(2..=max_actions);
    let n = live + 1;
    let term = live;
    let mut transition = vec![0.0; n * n_actions * n];
    for x in 0..n {
        for a in 0..n_actions {
            let base = (x * n_actions + a) * n;
            if x == term {
                transition[base + term] = 1.0;
                continue;
            }
            let mut raw: Vec<f64> = (0..n)
                .map(|_| -(1.0 - rng.random_range(0.0..1.0f64)).ln())
                .collect();
            let sum: f64 = raw.iter().sum();
            for r in &mut raw {
                *r = 0.75 * (*r / sum);
            }
            raw[term] += 0.25;
            let correction: f64 = raw.iter().sum();
            raw[term] += 1.0 - correction;
            transition[base..base + n].copy_from_slice(&raw);
        }
    }
    let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    d[term] = 0.0;
    HittingCmdp {
        n_states: n,
        n_actions,
        transition,
        d,
        terminal: (0..n).map(|x| x == term).collect(),
        x0: 0,
        d0: 0.0, // callers set this from the base policy's expected cost
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_room_chain() -> (HittingCmdp, TablePolicy) {
        // x0 -> x1 -> terminal under action 0; action 1 loiters.
        let cmdp = HittingCmdp {
            n_states: 3,
            n_actions: 2,
            transition: vec![
                0.0, 1.0, 0.0, // x0, a0 -> x1
                1.0, 0.0, 0.0, // x0, a1 -> x0
                0.0, 0.0, 1.0, // x1, a0 -> term
                0.0, 1.0, 0.0, // x1, a1 -> x1
                0.0, 0.0, 1.0, // term absorbing
                0.0, 0.0, 1.0,
            ],
            d: vec![0.5, 1.0, 0.0],
            terminal: vec![false, false, true],
            x0: 0,
            d0: 2.0,
        };
        // Always move on.
        let pi = TablePolicy::new(vec![vec![1.0, 0.0]; 3]);
        (cmdp, pi)
    }

    #[test]
    fn zero_everything_maps_to_zero() {
        let (cmdp, pi) = two_room_chain();
        let out = bellman_apply(&cmdp, &pi, |_, _| 0.0, &vec![0.0; 3]);
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn expected_cost_is_a_bellman_fixed_point() {
        let (cmdp, pi) = two_room_chain();
        let d_pi = expected_cumulative_d(&cmdp, &pi).unwrap();
        assert!((d_pi[0] - 1.5).abs() < 1e-12);
        assert!((d_pi[1] - 1.0).abs() < 1e-12);
        assert_eq!(d_pi[2], 0.0);
        let image = bellman_apply_d(&cmdp, &pi, &d_pi);
        for (a, b) in image.iter().zip(&d_pi) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn membership_checks() {
        let (cmdp, pi) = two_room_chain();
        let d_pi = expected_cumulative_d(&cmdp, &pi).unwrap();
        let l = LyapunovCandidate { values: d_pi.clone() };
        assert_eq!(is_lyapunov(&cmdp, &pi, &l).unwrap(), (true, None));

        // Halving the fixed point violates the operator inequality somewhere.
        let half = LyapunovCandidate {
            values: d_pi.iter().map(|v| 0.5 * v).collect(),
        };
        let (ok, witness) = is_lyapunov(&cmdp, &pi, &half).unwrap();
        assert!(!ok);
        assert!(witness.is_some());

        // All-zero candidate fails against positive costs.
        let zero = LyapunovCandidate { values: vec![0.0; 3] };
        let (ok, _) = is_lyapunov(&cmdp, &pi, &zero).unwrap();
        assert!(!ok);
    }

    #[test]
    fn iterated_operator_converges_to_expected_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let mut cmdp = random_hitting_cmdp(&mut rng, 4, 3);
            let pi = TablePolicy::uniform(cmdp.n_states, cmdp.n_actions);
            let d_pi = expected_cumulative_d(&cmdp, &pi).unwrap();
            cmdp.d0 = d_pi[cmdp.x0];
            // Start from a valid candidate strictly above the fixed point.
            let mut v: Vec<f64> = d_pi
                .iter()
                .zip(&cmdp.terminal)
                .map(|(x, &t)| if t { 0.0 } else { x + 1.0 })
                .collect();
            for _ in 0..200 {
                v = bellman_apply_d(&cmdp, &pi, &v);
            }
            let err = v
                .iter()
                .zip(&d_pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-8, "residual {err}");
        }
    }

    #[test]
    fn upper_bound_and_occupancy_hold_for_fixed_point_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let mut cmdp = random_hitting_cmdp(&mut rng, 4, 3);
            let pi = TablePolicy::uniform(cmdp.n_states, cmdp.n_actions);
            let d_pi = expected_cumulative_d(&cmdp, &pi).unwrap();
            cmdp.d0 = d_pi[cmdp.x0];
            let l = LyapunovCandidate { values: d_pi };
            assert!(is_lyapunov(&cmdp, &pi, &l).unwrap().0);
            let slack = check_upper_bound_lemma(&cmdp, &pi, &l, 10).unwrap();
            assert!(slack >= -1e-9, "upper-bound slack {slack}");
            let occ = occupancy_bound_slack(&cmdp, &pi, &l, 11);
            assert!(occ >= -1e-9, "occupancy slack {occ}");
            let mono = monotone_contraction_slack(&cmdp, &pi, &l, 10);
            assert!(mono >= -1e-9, "contraction slack {mono}");
        }
    }

    #[test]
    fn relaxed_set_rejects_adversarial_policy() {
        // x0 can exit cheaply (a0) or enter an expensive loop state (a1).
        let cmdp = HittingCmdp {
            n_states: 3,
            n_actions: 2,
            transition: vec![
                0.0, 0.0, 1.0, // x0, a0 -> term
                0.0, 1.0, 0.0, // x0, a1 -> y
                0.0, 0.0, 1.0, // y, a0 -> term
                0.0, 1.0, 0.0, // y, a1 -> y
                0.0, 0.0, 1.0, // term
                0.0, 0.0, 1.0,
            ],
            d: vec![0.4, 10.0, 0.0],
            terminal: vec![false, false, true],
            x0: 0,
            d0: 0.5,
        };
        let pi_b = TablePolicy::new(vec![vec![1.0, 0.0]; 3]);
        // Optimal trajectory exits immediately; the splice is fine.
        let mut opt = HashMap::new();
        opt.insert(0usize, 0usize);
        assert_eq!(
            relaxed_induced_set_check(&cmdp, &opt, &pi_b).unwrap(),
            (true, None)
        );
        // An adversary loitering in the expensive state violates the
        // relaxed inequality there.
        let mut adv = HashMap::new();
        adv.insert(0usize, 1usize);
        adv.insert(1usize, 1usize);
        let (ok, witness) = relaxed_induced_set_check(&cmdp, &adv, &pi_b).unwrap();
        assert!(!ok);
        // Both the entry state and the loop state violate; the witness is
        // the first in index order.
        assert!(matches!(witness, Some(0) | Some(1)));
    }

    #[test]
    fn augmented_quotient_of_the_gated_chain() {
        let fixture = crate::toys::build_gated_chain();
        let (hitting, index) = hitting_from_augmented(&fixture.cmdp, 1.0, &[0]).unwrap();
        // Live states (s1, q = 1..=6 saturated) plus terminal copies of s0.
        assert!(hitting.validate().is_ok());
        assert!(index.contains_key(&(1, 1)));
        assert!(index.contains_key(&(1, 6)));
        assert!(!index.contains_key(&(1, 7)));
        // Conservative base policy: always leave.
        let pi_b = TablePolicy::new(vec![vec![1.0, 0.0]; hitting.n_states]);
        let d_pi = expected_cumulative_d(&hitting, &pi_b).unwrap();
        // Leaving immediately pays only the current state's cost.
        assert!((d_pi[index[&(1, 1)]] - 1.0).abs() < 1e-12);
    }
}
