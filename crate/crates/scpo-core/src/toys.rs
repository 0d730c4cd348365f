//! Named toy CMDP fixtures with pinned reference values.
//!
//! Each fixture is reconstructed from a small set of constraints: per-action
//! safety probabilities, lump-sum returns, and the advantage rows they imply
//! under the uniform reference policy. The lump-sum parameters come from
//! solving the `k = 0` and `k = 1` advantage rows, then cross-checking every
//! remaining row; a reconstruction that fails a cross-check is a build error,
//! not a tolerance problem. [`verify_fixture`] runs those cross-checks with
//! the exact oracle.

use crate::cmdp::{TabularCmdp, DEFAULT_DELTA};
use crate::error::Result;
use crate::oracle::{KPower, Values, DEFAULT_ENUM_CAP};
use crate::policy::TablePolicy;

/// A quantity a fixture pins, with its tolerance.
#[derive(Debug, Clone)]
pub struct ExpectedValue {
    pub label: String,
    pub expected: f64,
    pub tolerance: f64,
    pub quantity: Quantity,
}

/// How to evaluate a pinned quantity with the exact oracle, always at the
/// initial state under the fixture's reference policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    /// Safety Q-value of an initial action.
    SafetyQ { action: usize },
    /// Safety value of the initial state.
    SafetyV,
    /// Advantage of an initial action under the reward-cancelled value,
    /// undiscounted.
    RewardAdvantage { action: usize, k: KPower },
    /// Advantage under the cost-termed value with the given `beta`.
    CostTermAdvantage { action: usize, k: KPower, beta: f64 },
}

/// A named toy CMDP with a reference policy and pinned oracle values.
#[derive(Debug, Clone)]
pub struct ToyFixture {
    pub name: &'static str,
    pub cmdp: TabularCmdp,
    pub reference_policy: TablePolicy,
    pub expected_values: Vec<ExpectedValue>,
    /// Human-readable description of the reconstruction choices.
    pub notes: &'static str,
}

/// Evaluates one pinned quantity with the exact oracle.
pub fn evaluate_quantity(fixture: &ToyFixture, quantity: Quantity) -> Result<f64> {
    let vals = Values::new(
        &fixture.cmdp,
        &fixture.reference_policy,
        DEFAULT_DELTA,
        DEFAULT_ENUM_CAP,
    );
    match quantity {
        Quantity::SafetyQ { action } => vals.qc0(action),
        Quantity::SafetyV => vals.vc0(),
        Quantity::RewardAdvantage { action, k } => vals.ar0(action, 1.0, k),
        Quantity::CostTermAdvantage { action, k, beta } => vals.arc(
            0,
            fixture.cmdp.initial_state,
            vals.initial_q(),
            action,
            1.0,
            k,
            beta,
        ),
    }
}

/// Checks every pinned value against the oracle; returns the failures.
pub fn verify_fixture(fixture: &ToyFixture) -> Result<Vec<(String, f64, f64)>> {
    let mut failures = Vec::new();
    for ev in &fixture.expected_values {
        let got = evaluate_quantity(fixture, ev.quantity)?;
        if (got - ev.expected).abs() > ev.tolerance {
            failures.push((ev.label.clone(), ev.expected, got));
        }
    }
    Ok(failures)
}

fn ev(label: &str, expected: f64, tolerance: f64, quantity: Quantity) -> ExpectedValue {
    ExpectedValue {
        label: label.to_string(),
        expected,
        tolerance,
        quantity,
    }
}

/// Two-state gated chain: staying in the rewarding state costs one unit per
/// step against a budget of five, over ten steps.
///
/// State 1 yields reward 1 per visit (either action) and cost 1 on entry;
/// action 1 stays, action 0 moves to the absorbing zero-reward, zero-cost
/// state 0. A policy that can see the cumulative cost collects five rewards
/// and leaves exactly at the budget.
pub fn build_gated_chain() -> ToyFixture {
    let cmdp = TabularCmdp::new(
        2,
        2,
        vec![
            1.0, 0.0, // s0, a0 -> s0
            1.0, 0.0, // s0, a1 -> s0
            1.0, 0.0, // s1, a0 -> s0 (leave)
            0.0, 1.0, // s1, a1 -> s1 (stay)
        ],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![0.0, 1.0],
        5.0,
        10,
        1,
    )
    .expect("gated chain is valid");
    ToyFixture {
        name: "gated_chain",
        cmdp,
        reference_policy: TablePolicy::uniform(2, 2),
        expected_values: vec![ev(
            "V^c(s0) under uniform is strictly below 1",
            0.5,
            0.5 - 1e-9,
            Quantity::SafetyV,
        )],
        notes: "reward is earned per visit to state 1 regardless of action; \
                the initial state's entry cost counts at t = 0",
    }
}

const LUMP_RETURN_HIGH: f64 = 200.0;
const LUMP_RETURN_LOW: f64 = 20.0;

/// Three-state branching CMDP where one action is lucrative but unsafe half
/// the time and the other is modest but always safe.
///
/// Action 0: lump reward 200, then a 50/50 branch to a safe or an
/// over-budget terminal. Action 1: lump reward 20, always safe. Budget 1,
/// two steps, uniform reference policy.
pub fn build_cancellation_cmdp() -> ToyFixture {
    let cmdp = TabularCmdp::new(
        3,
        2,
        vec![
            0.0, 0.5, 0.5, // s0, a0 -> safe/unsafe terminal
            0.0, 1.0, 0.0, // s0, a1 -> safe terminal
            0.0, 1.0, 0.0, // terminals absorb
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, //
        ],
        vec![LUMP_RETURN_HIGH, LUMP_RETURN_LOW, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 2.0],
        1.0,
        2,
        0,
    )
    .expect("cancellation CMDP is valid");
    let adv = |a, k| Quantity::RewardAdvantage {
        action: a,
        k: KPower::Finite(k),
    };
    ToyFixture {
        name: "cancellation",
        cmdp,
        reference_policy: TablePolicy::uniform(3, 2),
        expected_values: vec![
            ev("Q^c(s0, a0)", 0.5, 1e-12, Quantity::SafetyQ { action: 0 }),
            ev("Q^c(s0, a1)", 1.0, 1e-12, Quantity::SafetyQ { action: 1 }),
            ev("A^{r,0}(s0, a0)", 90.0, 0.01, adv(0, 0)),
            ev("A^{r,0}(s0, a1)", -90.0, 0.01, adv(1, 0)),
            ev("A^{r,1}(s0, a0)", 40.0, 0.01, adv(0, 1)),
            ev("A^{r,1}(s0, a1)", -40.0, 0.01, adv(1, 1)),
            ev("A^{r,4}(s0, a0)", -3.75, 0.01, adv(0, 4)),
            ev("A^{r,4}(s0, a1)", 3.75, 0.01, adv(1, 4)),
            ev("A^{r,8}(s0, a0)", -9.6, 0.01, adv(0, 8)),
            ev("A^{r,8}(s0, a1)", 9.6, 0.01, adv(1, 8)),
            ev(
                "A^{r,inf}(s0, a0)",
                -10.0,
                0.01,
                Quantity::RewardAdvantage {
                    action: 0,
                    k: KPower::Infinite,
                },
            ),
            ev(
                "A^{r,inf}(s0, a1)",
                10.0,
                0.01,
                Quantity::RewardAdvantage {
                    action: 1,
                    k: KPower::Infinite,
                },
            ),
        ],
        notes: "lump returns 200 and 20 solved from the k = 0 and k = 1 \
                advantage rows under the uniform policy; cross-checked \
                against the k = 4, 8 and infinity rows",
    }
}

/// Variant where no policy is fully safe: action safeties 0.5 and 0.7.
pub fn build_partial_safety_cmdp() -> ToyFixture {
    let cmdp = TabularCmdp::new(
        3,
        2,
        vec![
            0.0, 0.5, 0.5, // s0, a0
            0.0, 0.7, 0.3, // s0, a1
            0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, //
        ],
        vec![LUMP_RETURN_HIGH, LUMP_RETURN_LOW, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 2.0],
        1.0,
        2,
        0,
    )
    .expect("partial-safety CMDP is valid");
    let adv = |a, k| Quantity::RewardAdvantage {
        action: a,
        k: KPower::Finite(k),
    };
    ToyFixture {
        name: "partial_safety",
        cmdp,
        reference_policy: TablePolicy::uniform(3, 2),
        expected_values: vec![
            ev("Q^c(s0, a0)", 0.5, 1e-12, Quantity::SafetyQ { action: 0 }),
            ev("Q^c(s0, a1)", 0.7, 1e-12, Quantity::SafetyQ { action: 1 }),
            ev("A^{r,0}(s0, a0)", 90.0, 0.01, adv(0, 0)),
            ev("A^{r,0}(s0, a1)", -90.0, 0.01, adv(1, 0)),
            ev("A^{r,4}(s0, a0)", 3.84, 0.01, adv(0, 4)),
            ev("A^{r,4}(s0, a1)", -3.84, 0.01, adv(1, 4)),
            ev("A^{r,8}(s0, a0)", -0.18, 0.01, adv(0, 8)),
            ev("A^{r,8}(s0, a1)", 0.18, 0.01, adv(1, 8)),
            ev(
                "A^{r,inf}(s0, a0)",
                0.0,
                0.01,
                Quantity::RewardAdvantage {
                    action: 0,
                    k: KPower::Infinite,
                },
            ),
            ev(
                "A^{r,inf}(s0, a1)",
                0.0,
                0.01,
                Quantity::RewardAdvantage {
                    action: 1,
                    k: KPower::Infinite,
                },
            ),
        ],
        notes: "same lump returns as the cancellation fixture with branch \
                safeties 0.5 and 0.7; the best achievable safety is 0.7",
    }
}

/// Two equally safe, equally rewarding actions whose unsafe branches incur
/// very different costs, so only the cost-termed objective separates them.
///
/// Action 0 is the low-cost action; action 1's unsafe branch costs five
/// times more. Both have safety 0.9 and identical lump reward.
pub fn build_equal_safety_cmdp() -> ToyFixture {
    let cmdp = TabularCmdp::new(
        4,
        2,
        vec![
            0.0, 0.9, 0.1, 0.0, // s0, a0 -> safe / cheap-unsafe
            0.0, 0.9, 0.0, 0.1, // s0, a1 -> safe / dear-unsafe
            0.0, 1.0, 0.0, 0.0, // terminals absorb
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 0.0, 1.0, //
        ],
        vec![100.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 2.0, 10.0],
        1.0,
        2,
        0,
    )
    .expect("equal-safety CMDP is valid");
    let mut expected_values = vec![
        ev("Q^c(s0, a0)", 0.9, 1e-12, Quantity::SafetyQ { action: 0 }),
        ev("Q^c(s0, a1)", 0.9, 1e-12, Quantity::SafetyQ { action: 1 }),
    ];
    for k in [0u32, 1, 4] {
        expected_values.push(ev(
            &format!("A^{{r,{k}}}(s0, a0) - A^{{r,{k}}}(s0, a1)"),
            0.0,
            1e-12,
            // Encoded as two separate rows checked for equality in tests;
            // here we pin each side's absolute value instead.
            Quantity::RewardAdvantage {
                action: 0,
                k: KPower::Finite(k),
            },
        ));
        // The advantage of either action is zero by symmetry.
        expected_values.last_mut().unwrap().label = format!("A^{{r,{k}}}(s0, a0)");
    }
    ToyFixture {
        name: "equal_safety",
        cmdp,
        reference_policy: TablePolicy::uniform(4, 2),
        expected_values,
        notes: "identical lump reward 100 and safety 0.9 on both actions; \
                unsafe terminals cost 2 vs 10 per step, so the cost-termed \
                objective prefers action 0 for any positive beta",
    }
}

/// All four fixtures in a stable order.
pub fn all_fixtures() -> Vec<ToyFixture> {
    vec![
        build_gated_chain(),
        build_cancellation_cmdp(),
        build_partial_safety_cmdp(),
        build_equal_safety_cmdp(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{best_surely_safe_stationary, constrained_dp_solve};

    #[test]
    fn fixture_construction_is_deterministic() {
        for (a, b) in all_fixtures().iter().zip(all_fixtures().iter()) {
            assert_eq!(a.cmdp, b.cmdp);
            assert_eq!(a.reference_policy, b.reference_policy);
        }
    }

    #[test]
    fn fixtures_export_to_the_text_format() {
        for fixture in all_fixtures() {
            let text = crate::cmdp::to_text(&fixture.cmdp);
            let back = crate::cmdp::from_text(&text).unwrap();
            assert_eq!(fixture.cmdp, back, "{}", fixture.name);
        }
    }

    #[test]
    fn every_pinned_value_passes_the_oracle() {
        for fixture in all_fixtures() {
            let failures = verify_fixture(&fixture).unwrap();
            assert!(
                failures.is_empty(),
                "fixture {} failed: {failures:?}",
                fixture.name
            );
        }
    }

    #[test]
    fn gated_chain_optimum_and_state_count() {
        let fixture = build_gated_chain();
        let sol = constrained_dp_solve(&fixture.cmdp, 1.0).unwrap();
        assert!((sol.expected_return - 5.0).abs() < 1e-12);
        assert!((sol.expected_cost - 5.0).abs() < 1e-12);
        let count = crate::oracle::augmented_state_count(&fixture.cmdp, 1.0).unwrap();
        assert_eq!(count, 20);
    }

    #[test]
    fn gated_chain_six_stays_are_unsafe() {
        // Deterministic policy that stays six times then leaves.
        struct StayN(usize);
        impl crate::policy::Policy for StayN {
            fn action_probs(&self, state: usize, q: f64) -> Vec<f64> {
                if state == 1 && (q as usize) <= self.0 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0]
                }
            }
        }
        let fixture = build_gated_chain();
        let traj =
            crate::cmdp::rollout(&fixture.cmdp, &StayN(5), crate::cmdp::DEFAULT_DELTA, 0).unwrap();
        // Six visits to state 1 (q reaches 6) exceed the budget of 5.
        assert_eq!(traj.cumulative_costs.iter().cloned().fold(0.0, f64::max), 6.0);
        assert!(!crate::cmdp::trajectory_safety(&traj).unwrap());
    }

    #[test]
    fn gated_chain_best_stationary_is_strictly_below_dp() {
        let fixture = build_gated_chain();
        let sol = constrained_dp_solve(&fixture.cmdp, 1.0).unwrap();
        let (p, ret) =
            best_surely_safe_stationary(&fixture.cmdp, crate::cmdp::DEFAULT_DELTA, 0.01, 1)
                .unwrap();
        assert_eq!(p, 0.0);
        assert!(ret < sol.expected_return - 1e-9);
        assert!((ret - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_safety_prefers_low_cost_action_under_beta() {
        let fixture = build_equal_safety_cmdp();
        let vals = Values::new(
            &fixture.cmdp,
            &fixture.reference_policy,
            DEFAULT_DELTA,
            DEFAULT_ENUM_CAP,
        );
        let q0 = vals.initial_q();
        // Equal advantages for every k without the cost term.
        for k in [KPower::Finite(0), KPower::Finite(1), KPower::Finite(4)] {
            let a0 = vals.ar0(0, 1.0, k).unwrap();
            let a1 = vals.ar0(1, 1.0, k).unwrap();
            assert!((a0 - a1).abs() < 1e-12, "k = {k}");
        }
        // Strict preference with the cost term on.
        let low = vals
            .arc(0, 0, q0, 0, 1.0, KPower::Finite(1), 1.0)
            .unwrap();
        let high = vals
            .arc(0, 0, q0, 1, 1.0, KPower::Finite(1), 1.0)
            .unwrap();
        assert!(
            low > high + 1e-9,
            "low-cost action should be preferred: {low} vs {high}"
        );
        // And the expected cumulative costs genuinely differ.
        let cost0 = vals.cost_value(1, 2, 2.0, 1.0).unwrap();
        let cost1 = vals.cost_value(1, 3, 10.0, 1.0).unwrap();
        assert!(cost1 > cost0);
    }
}
