//! Mechanical verification of the policy-difference identities, surrogate
//! lower bounds, gradient identities and the safety-value recursion identity.
//!
//! Every check computes both sides of its statement through routes that share
//! as little code as possible and reports a residual (for equalities) or a
//! slack (for inequalities, nonnegative when the bound holds).

use std::collections::HashSet;

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::policy::{Policy, SoftmaxPolicy};

use super::enumerate::{enumerate, safe_mass};
use super::values::{expect_under, reachable_augmented};
use super::{KPower, Values, DEFAULT_ENUM_CAP};

/// Which value function a policy-difference check targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DifferenceForm {
    /// Plain discounted reward value.
    Reward { gamma: f64 },
    /// Safety value; undiscounted by definition.
    Cost,
}

/// Residual of the exact policy-difference equality
/// `V_{pi'}(s0) - V_pi(s0) = E_{pi'}[sum gamma^t (1 - pi/pi') Q_pi]`.
pub fn check_policy_difference_identity(
    cmdp: &TabularCmdp,
    pi: &dyn Policy,
    pi_prime: &dyn Policy,
    delta: f64,
    form: DifferenceForm,
) -> Result<f64> {
    let vals_pi = Values::new(cmdp, pi, delta, DEFAULT_ENUM_CAP);
    let vals_prime = Values::new(cmdp, pi_prime, delta, DEFAULT_ENUM_CAP);
    let (lhs, gamma) = match form {
        DifferenceForm::Reward { gamma } => (
            vals_prime.vr0(gamma, KPower::Finite(0))? - vals_pi.vr0(gamma, KPower::Finite(0))?,
            gamma,
        ),
        DifferenceForm::Cost => (vals_prime.vc0()? - vals_pi.vc0()?, 1.0),
    };
    let rhs = expect_under(cmdp, pi_prime, gamma, |t, s, q, a| {
        let ratio = ratio_of(pi, pi_prime, s, q, a)?;
        let q_val = match form {
            DifferenceForm::Reward { gamma } => vals_pi.qr(t, s, q, a, gamma, KPower::Finite(0))?,
            DifferenceForm::Cost => vals_pi.qc(t, s, q, a)?,
        };
        Ok((1.0 - ratio) * q_val)
    })?;
    Ok((lhs - rhs).abs())
}

/// Residual between the Q-weighted and advantage-weighted forms of the
/// policy-difference expectation. Exactly zero in exact arithmetic.
pub fn advantage_substitution_residual(
    cmdp: &TabularCmdp,
    pi: &dyn Policy,
    pi_prime: &dyn Policy,
    delta: f64,
    form: DifferenceForm,
) -> Result<f64> {
    let vals_pi = Values::new(cmdp, pi, delta, DEFAULT_ENUM_CAP);
    let gamma = match form {
        DifferenceForm::Reward { gamma } => gamma,
        DifferenceForm::Cost => 1.0,
    };
    let with_q = expect_under(cmdp, pi_prime, gamma, |t, s, q, a| {
        let ratio = ratio_of(pi, pi_prime, s, q, a)?;
        let v = match form {
            DifferenceForm::Reward { gamma } => vals_pi.qr(t, s, q, a, gamma, KPower::Finite(0))?,
            DifferenceForm::Cost => vals_pi.qc(t, s, q, a)?,
        };
        Ok((1.0 - ratio) * v)
    })?;
    let with_a = expect_under(cmdp, pi_prime, gamma, |t, s, q, a| {
        let ratio = ratio_of(pi, pi_prime, s, q, a)?;
        let v = match form {
            DifferenceForm::Reward { gamma } => vals_pi.ar(t, s, q, a, gamma, KPower::Finite(0))?,
            DifferenceForm::Cost => vals_pi.ac(t, s, q, a)?,
        };
        Ok((1.0 - ratio) * v)
    })?;
    Ok((with_q - with_a).abs())
}

/// `pi(a | s, q) / pi'(a | s, q)`, defined only where `pi'` is positive.
fn ratio_of(
    pi: &dyn Policy,
    pi_prime: &dyn Policy,
    s: usize,
    q: f64,
    a: usize,
) -> Result<f64> {
    let denom = pi_prime.action_probs(s, q)[a];
    if denom <= 0.0 {
        return Err(Error::UndefinedRatio { state: s, action: a });
    }
    Ok(pi.action_probs(s, q)[a] / denom)
}

/// Slacks of the two surrogate lower bounds, plus their ingredients.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateSlacks {
    /// Slack of the `(pi'/pi - 1)` (ratio) form; the bound holds iff >= 0.
    pub slack_ratio_form: f64,
    /// Slack of the `(1 - pi/pi')` (inverse) form.
    pub slack_inverse_form: f64,
    /// Max total-variation distance between the policies over visited states.
    pub alpha: f64,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    /// Finite-horizon truncation margin `gamma^T max|A| / (1 - gamma)`;
    /// add it to the slack tolerance when treating the bounds as
    /// infinite-horizon statements.
    pub truncation: f64,
}

/// Surrogate bounds for the plain discounted value (`k = 0`, no cost term).
pub fn check_surrogate_bounds(
    cmdp: &TabularCmdp,
    pi: &dyn Policy,
    pi_prime: &dyn Policy,
    delta: f64,
    gamma: f64,
) -> Result<SurrogateSlacks> {
    check_vrc_surrogate_bounds(cmdp, pi, pi_prime, delta, gamma, KPower::Finite(0), 0.0)
}

/// Surrogate bounds for the first-order approximation of the
/// safety-cancelled value with cost term, at arbitrary `k` and `beta`.
///
/// The approximation keeps the behavior policy's safety critic inside the
/// transformed reward while the outer expectation runs under `pi'`.
pub fn check_vrc_surrogate_bounds(
    cmdp: &TabularCmdp,
    pi: &dyn Policy,
    pi_prime: &dyn Policy,
    delta: f64,
    gamma: f64,
    k: KPower,
    beta: f64,
) -> Result<SurrogateSlacks> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!(
            "surrogate bounds need gamma in [0, 1), got {gamma}"
        )));
    }
    let vals_pi = Values::new(cmdp, pi, delta, DEFAULT_ENUM_CAP);

    // Union of augmented states visited by either policy.
    let mut triples = reachable_augmented(cmdp, pi);
    triples.extend(reachable_augmented(cmdp, pi_prime));
    let mut seen = HashSet::new();
    triples.retain(|&(t, s, q)| seen.insert((t, s, q.to_bits())));

    let mut alpha: f64 = 0.0;
    let mut epsilon: f64 = 0.0;
    let mut epsilon_prime: f64 = 0.0;
    let mut max_abs_adv: f64 = 0.0;
    for &(t, s, q) in &triples {
        let p = pi.action_probs(s, q);
        let p_prime = pi_prime.action_probs(s, q);
        let tv = 0.5
            * p.iter()
                .zip(&p_prime)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        alpha = alpha.max(tv);
        for a in 0..cmdp.n_actions {
            if p[a] == 0.0 && p_prime[a] == 0.0 {
                continue;
            }
            let adv = vals_pi.arc(t, s, q, a, gamma, k, beta)?;
            max_abs_adv = max_abs_adv.max(adv.abs());
            if p[a] <= 0.0 {
                return Err(Error::UndefinedRatio { state: s, action: a });
            }
            epsilon = epsilon.max(((p_prime[a] / p[a]) - 1.0).abs() * adv.abs());
            if p_prime[a] <= 0.0 {
                return Err(Error::UndefinedRatio { state: s, action: a });
            }
            epsilon_prime = epsilon_prime.max((1.0 - p[a] / p_prime[a]).abs() * adv.abs());
        }
    }

    let v_pi = vals_pi.vrc0(gamma, k, beta)?;
    let vbar_prime = first_order_value(cmdp, &vals_pi, pi_prime, delta, gamma, k, beta)?;

    let surrogate_ratio = expect_under(cmdp, pi, gamma, |t, s, q, a| {
        let p = pi.action_probs(s, q)[a];
        let p_prime = pi_prime.action_probs(s, q)[a];
        Ok((p_prime / p - 1.0) * vals_pi.arc(t, s, q, a, gamma, k, beta)?)
    })?;
    let surrogate_inverse = expect_under(cmdp, pi, gamma, |t, s, q, a| {
        let ratio = ratio_of(pi, pi_prime, s, q, a)?;
        Ok((1.0 - ratio) * vals_pi.arc(t, s, q, a, gamma, k, beta)?)
    })?;

    let denom = (1.0 - gamma) * (1.0 - gamma);
    let penalty_ratio = 2.0 * alpha * gamma * epsilon / denom;
    let penalty_inverse = 2.0 * alpha * gamma * epsilon_prime / denom;
    let truncation = gamma.powi(cmdp.horizon_t as i32) * max_abs_adv / (1.0 - gamma);

    Ok(SurrogateSlacks {
        slack_ratio_form: vbar_prime - v_pi - surrogate_ratio + penalty_ratio,
        slack_inverse_form: vbar_prime - v_pi - surrogate_inverse + penalty_inverse,
        alpha,
        epsilon,
        epsilon_prime,
        truncation,
    })
}

/// First-order value: expectation under `pi'` of the reward transformed with
/// `pi`'s safety critic, `E_{pi'}[sum gamma^t (r (Q^c_pi)^k - beta (1 - (Q^c_pi)^k) c)]`.
fn first_order_value(
    cmdp: &TabularCmdp,
    vals_pi: &Values,
    pi_prime: &dyn Policy,
    _delta: f64,
    gamma: f64,
    k: KPower,
    beta: f64,
) -> Result<f64> {
    expect_under(cmdp, pi_prime, gamma, |t, s, q, a| {
        let pow = k.apply(vals_pi.qc(t, s, q, a)?);
        Ok(cmdp.r(s, a) * pow - beta * (1.0 - pow) * cmdp.cost[s])
    })
}

/// Residual of the exact first-order expansion
/// `Vbar_{pi'}(s0) = V_pi(s0) + E_{pi'}[sum gamma^t A_pi(S_t, A_t)]`
/// for the safety-cancelled value with cost term.
pub fn check_first_order_expansion(
    cmdp: &TabularCmdp,
    pi: &dyn Policy,
    pi_prime: &dyn Policy,
    delta: f64,
    gamma: f64,
    k: KPower,
    beta: f64,
) -> Result<f64> {
    let vals_pi = Values::new(cmdp, pi, delta, DEFAULT_ENUM_CAP);
    let vbar = first_order_value(cmdp, &vals_pi, pi_prime, delta, gamma, k, beta)?;
    let v_pi = vals_pi.vrc0(gamma, k, beta)?;
    let adv_term = expect_under(cmdp, pi_prime, gamma, |t, s, q, a| {
        vals_pi.arc(t, s, q, a, gamma, k, beta)
    })?;
    Ok((vbar - v_pi - adv_term).abs())
}

/// Safety-value recursion identity `Q^c(s, a) = sum_{s'} p(s' | s, a) V^c(s')`,
/// checked by independent enumeration on both sides for every `(s, a)`,
/// treating each state as an episode start. Returns the maximum residual.
pub fn qc_identity_residual(
    cmdp: &TabularCmdp,
    pi: &dyn Policy,
    delta: f64,
    cap: u64,
) -> Result<f64> {
    if cmdp.horizon_t < 2 {
        return Err(Error::InvalidConfig(
            "recursion identity needs horizon >= 2".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for s in 0..cmdp.n_states {
        let q0 = cmdp.cost[s];
        for a in 0..cmdp.n_actions {
            let lhs = safe_mass(cmdp, pi, s, 0.0, cmdp.horizon_t, Some(a), delta, cap)?;
            let mut rhs = 0.0;
            for s_next in 0..cmdp.n_states {
                let p = cmdp.p(s, a, s_next);
                if p == 0.0 {
                    continue;
                }
                let suffix =
                    safe_mass(cmdp, pi, s_next, q0, cmdp.horizon_t - 1, None, delta, cap)?;
                rhs += p * suffix;
            }
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Gradient identity (softmax-parameterized tabular policies)
// ---------------------------------------------------------------------------

/// Which weighting the score-function gradient estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradForm {
    QWeighted,
    AdvantageWeighted,
}

/// Enumerated score-function gradient of the safety value:
/// `E[sum_t grad log pi(A_t | S_t) w(S_t, A_t)]` with `w` the safety Q-value
/// or the safety advantage. Indexed `[state][action]` like the logits.
pub fn grad_vc_reinforce(
    cmdp: &TabularCmdp,
    pi: &SoftmaxPolicy,
    delta: f64,
    form: GradForm,
) -> Result<Vec<Vec<f64>>> {
    let vals = Values::new(cmdp, pi, delta, DEFAULT_ENUM_CAP);
    let dist = enumerate(
        cmdp,
        pi,
        cmdp.initial_state,
        cmdp.horizon_t,
        delta,
        DEFAULT_ENUM_CAP,
    )?;
    let mut grad = vec![vec![0.0; cmdp.n_actions]; cmdp.n_states];
    for (traj, prob) in &dist.entries {
        for (t, step) in traj.steps.iter().enumerate() {
            let q = traj.cumulative_costs[t];
            let weight = match form {
                GradForm::QWeighted => vals.qc(t, step.state, q, step.action)?,
                GradForm::AdvantageWeighted => vals.ac(t, step.state, q, step.action)?,
            };
            if weight == 0.0 {
                continue;
            }
            let glp = pi.grad_log_prob(step.state, step.action);
            for (a, &g) in glp.iter().enumerate() {
                grad[step.state][a] += prob * g * weight;
            }
        }
    }
    Ok(grad)
}

/// Central finite differences of the exact safety value with respect to the
/// softmax logits.
pub fn grad_vc_fd(
    cmdp: &TabularCmdp,
    pi: &SoftmaxPolicy,
    delta: f64,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut grad = vec![vec![0.0; cmdp.n_actions]; cmdp.n_states];
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            let mut theta_plus = pi.theta.clone();
            theta_plus[s][a] += step;
            let mut theta_minus = pi.theta.clone();
            theta_minus[s][a] -= step;
            let plus = SoftmaxPolicy::new(theta_plus);
            let minus = SoftmaxPolicy::new(theta_minus);
            let v_plus = Values::new(cmdp, &plus, delta, DEFAULT_ENUM_CAP).vc0()?;
            let v_minus = Values::new(cmdp, &minus, delta, DEFAULT_ENUM_CAP).vc0()?;
            grad[s][a] = (v_plus - v_minus) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// Deviations between the enumerated score-function gradients and central
/// finite differences of the exact safety value.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_dev_q_form: f64,
    pub max_dev_a_form: f64,
    /// Max elementwise difference between the two estimator forms.
    pub q_vs_a_dev: f64,
}

pub fn check_gradient_identity(
    cmdp: &TabularCmdp,
    pi: &SoftmaxPolicy,
    delta: f64,
    fd_step: f64,
) -> Result<GradCheck> {
    let by_q = grad_vc_reinforce(cmdp, pi, delta, GradForm::QWeighted)?;
    let by_a = grad_vc_reinforce(cmdp, pi, delta, GradForm::AdvantageWeighted)?;
    let by_fd = grad_vc_fd(cmdp, pi, delta, fd_step)?;
    let max_over = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| {
        x.iter()
            .flatten()
            .zip(y.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };
    Ok(GradCheck {
        max_dev_q_form: max_over(&by_q, &by_fd),
        max_dev_a_form: max_over(&by_a, &by_fd),
        q_vs_a_dev: max_over(&by_q, &by_a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::DEFAULT_DELTA;
    use crate::policy::UniformPolicy;

    #[test]
    fn identical_policies_give_zero_residual_and_slack() {
        let cmdp = TabularCmdp::new(
            2,
            2,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.3, 0.7],
            vec![1.0, 0.5, 0.25, 0.75],
            vec![0.0, 1.0],
            1.0,
            3,
            0,
        )
        .unwrap();
        let pi = UniformPolicy::new(2);
        let r = check_policy_difference_identity(
            &cmdp,
            &pi,
            &pi,
            DEFAULT_DELTA,
            DifferenceForm::Reward { gamma: 0.9 },
        )
        .unwrap();
        assert!(r < 1e-14);
        let r = check_policy_difference_identity(&cmdp, &pi, &pi, DEFAULT_DELTA, DifferenceForm::Cost)
            .unwrap();
        assert!(r < 1e-14);
        let slacks = check_surrogate_bounds(&cmdp, &pi, &pi, DEFAULT_DELTA, 0.9).unwrap();
        assert_eq!(slacks.alpha, 0.0);
        assert!(slacks.slack_ratio_form.abs() < 1e-12);
        assert!(slacks.slack_inverse_form.abs() < 1e-12);
        let r =
            check_first_order_expansion(&cmdp, &pi, &pi, DEFAULT_DELTA, 0.9, KPower::Finite(2), 0.5)
                .unwrap();
        assert!(r < 1e-14);
    }

    #[test]
    fn single_state_single_action_gradient_is_zero() {
        let cmdp =
            TabularCmdp::new(1, 1, vec![1.0], vec![0.0], vec![0.0], 1.0, 3, 0).unwrap();
        let pi = SoftmaxPolicy::new(vec![vec![0.0]]);
        let check = check_gradient_identity(&cmdp, &pi, DEFAULT_DELTA, 1e-5).unwrap();
        assert!(check.max_dev_q_form < 1e-12);
        assert!(check.max_dev_a_form < 1e-12);
    }

    #[test]
    fn undefined_ratio_is_reported() {
        let cmdp = TabularCmdp::new(
            2,
            2,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.3, 0.7],
            vec![1.0, 0.5, 0.25, 0.75],
            vec![0.0, 1.0],
            1.0,
            3,
            0,
        )
        .unwrap();
        // pi assigns zero probability to an action pi' uses.
        let pi = crate::policy::TablePolicy::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let pi_prime = UniformPolicy::new(2);
        assert!(matches!(
            check_surrogate_bounds(&cmdp, &pi, &pi_prime, DEFAULT_DELTA, 0.9),
            Err(Error::UndefinedRatio { .. })
        ));
    }
}
