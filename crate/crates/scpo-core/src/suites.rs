//! Named verification suites: deterministic batteries of oracle checks that
//! back the `verify` command. Each suite returns one record per check with
//! the measured residual or slack and a pass flag at the documented
//! tolerance; a suite passes iff every record does.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cmdp::{rollout, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::estimators::vc_gamma_targets;
use crate::lyapunov::{
    check_upper_bound_lemma, expected_cumulative_d, hitting_from_augmented, is_lyapunov,
    monotone_contraction_slack, occupancy_bound_slack, random_hitting_cmdp,
    relaxed_induced_set_check, LyapunovCandidate,
};
use crate::nn::Mlp;
use crate::oracle::{
    augmented_state_count, best_surely_safe_stationary, check_first_order_expansion,
    check_gradient_identity, check_policy_difference_identity, check_vrc_surrogate_bounds,
    constrained_dp_solve, enumerate, instance_seed, qc_identity_residual, random_cmdp,
    random_policy, DifferenceForm, KPower, RandomCmdpConfig, Values, DEFAULT_ENUM_CAP,
};
use crate::policy::{SoftmaxPolicy, TablePolicy};
use crate::report::CheckRecord;
use crate::toys::{all_fixtures, build_cancellation_cmdp, build_gated_chain, evaluate_quantity};
use crate::trainer::EstimatorChoice;

/// Suite names accepted by the verify command.
pub const SUITE_NAMES: [&str; 5] = ["oracle", "theorems", "lyapunov", "toys", "gradcheck"];

/// Runs a suite by name with its default sizing.
pub fn run_suite(name: &str, master_seed: u64) -> Result<Vec<CheckRecord>> {
    match name {
        "toys" => run_toys_suite(),
        "theorems" => run_theorems_suite(master_seed, 100),
        "gradcheck" => run_gradcheck_suite(master_seed),
        "oracle" => run_oracle_suite(master_seed),
        "lyapunov" => run_lyapunov_suite(master_seed, 100),
        other => Err(Error::InvalidConfig(format!(
            "unknown suite `{other}` (expected one of {SUITE_NAMES:?})"
        ))),
    }
}

/// Toy-fixture reference values: safety Q-values and the advantage tables,
/// plus the grid-search maximum achievable safety.
pub fn run_toys_suite() -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    for fixture in all_fixtures() {
        for ev in &fixture.expected_values {
            let got = evaluate_quantity(&fixture, ev.quantity)?;
            records.push(CheckRecord::new(
                format!("toys/{}/{}", fixture.name, ev.label),
                0,
                got,
                (got - ev.expected).abs() <= ev.tolerance,
            ));
        }
    }
    // Best achievable safety on the partially safe fixture, by scanning
    // policies over a probability grid.
    let fixture = crate::toys::build_partial_safety_cmdp();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let pi = grid_policy(&fixture.cmdp, p);
        let vals = Values::new(&fixture.cmdp, &pi, DEFAULT_DELTA, DEFAULT_ENUM_CAP);
        best = best.max(vals.vc0()?);
    }
    records.push(CheckRecord::new(
        "toys/partial_safety/grid_max_vc",
        0,
        best,
        (best - 0.7).abs() <= 1e-9,
    ));
    Ok(records)
}

/// Two-action policy putting probability `p` on action 0 everywhere.
fn grid_policy(cmdp: &crate::cmdp::TabularCmdp, p: f64) -> TablePolicy {
    TablePolicy::new(vec![vec![p, 1.0 - p]; cmdp.n_states])
}

/// Policy-difference identities, advantage substitution, the safety-value
/// recursion identity, the first-order expansion, and both surrogate lower
/// bounds, on a seeded batch of random instances.
pub fn run_theorems_suite(master_seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    let ks = [
        KPower::Finite(0),
        KPower::Finite(1),
        KPower::Finite(2),
        KPower::Finite(4),
        KPower::Infinite,
    ];
    let betas = [0.0, 0.5, 2.0];
    for i in 0..instances {
        let seed = instance_seed(master_seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cmdp = random_cmdp(&mut rng, &RandomCmdpConfig::default());
        let pi = random_policy(&mut rng, cmdp.n_states, cmdp.n_actions);
        let pi_prime = random_policy(&mut rng, cmdp.n_states, cmdp.n_actions);
        let gamma = rng.random_range(0.5..0.95);
        let k = ks[i % ks.len()];
        let beta = betas[i % betas.len()];

        let r = check_policy_difference_identity(
            &cmdp,
            &pi,
            &pi_prime,
            DEFAULT_DELTA,
            DifferenceForm::Reward { gamma },
        )?;
        records.push(CheckRecord::new("theorems/diff_reward", seed, r, r < 1e-9));
        let r = check_policy_difference_identity(
            &cmdp,
            &pi,
            &pi_prime,
            DEFAULT_DELTA,
            DifferenceForm::Cost,
        )?;
        records.push(CheckRecord::new("theorems/diff_cost", seed, r, r < 1e-9));

        let r = crate::oracle::advantage_substitution_residual(
            &cmdp,
            &pi,
            &pi_prime,
            DEFAULT_DELTA,
            DifferenceForm::Reward { gamma },
        )?;
        records.push(CheckRecord::new(
            "theorems/advantage_substitution_reward",
            seed,
            r,
            r < 1e-10,
        ));
        let r = crate::oracle::advantage_substitution_residual(
            &cmdp,
            &pi,
            &pi_prime,
            DEFAULT_DELTA,
            DifferenceForm::Cost,
        )?;
        records.push(CheckRecord::new(
            "theorems/advantage_substitution_cost",
            seed,
            r,
            r < 1e-10,
        ));

        let r = qc_identity_residual(&cmdp, &pi, DEFAULT_DELTA, DEFAULT_ENUM_CAP)?;
        records.push(CheckRecord::new(
            "theorems/qc_recursion_identity",
            seed,
            r,
            r < 1e-10,
        ));

        let r = check_first_order_expansion(
            &cmdp,
            &pi,
            &pi_prime,
            DEFAULT_DELTA,
            gamma,
            k,
            beta,
        )?;
        records.push(CheckRecord::new(
            "theorems/first_order_expansion",
            seed,
            r,
            r < 1e-9,
        ));

        // Plain-value surrogate bounds.
        let slacks = crate::oracle::check_surrogate_bounds(
            &cmdp,
            &pi,
            &pi_prime,
            DEFAULT_DELTA,
            gamma,
        )?;
        let tol = 1e-9 + slacks.truncation;
        records.push(CheckRecord::new(
            "theorems/surrogate_ratio_form",
            seed,
            slacks.slack_ratio_form,
            slacks.slack_ratio_form >= -tol,
        ));
        records.push(CheckRecord::new(
            "theorems/surrogate_inverse_form",
            seed,
            slacks.slack_inverse_form,
            slacks.slack_inverse_form >= -tol,
        ));

        // First-order bounds for the safety-cancelled value with cost term.
        let slacks =
            check_vrc_surrogate_bounds(&cmdp, &pi, &pi_prime, DEFAULT_DELTA, gamma, k, beta)?;
        let tol = 1e-9 + slacks.truncation;
        records.push(CheckRecord::new(
            "theorems/vrc_surrogate_ratio_form",
            seed,
            slacks.slack_ratio_form,
            slacks.slack_ratio_form >= -tol,
        ));
        records.push(CheckRecord::new(
            "theorems/vrc_surrogate_inverse_form",
            seed,
            slacks.slack_inverse_form,
            slacks.slack_inverse_form >= -tol,
        ));
    }
    Ok(records)
}

/// Score-function gradient identities against central finite differences,
/// network backward passes, and the coincidence of the two clipped-surrogate
/// gradients at the behavior policy.
pub fn run_gradcheck_suite(master_seed: u64) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(master_seed, 1000));

    // Degenerate single-state chain: both sides are exactly zero.
    let single = crate::cmdp::TabularCmdp::new(
        1,
        1,
        vec![1.0],
        vec![0.0],
        vec![0.0],
        1.0,
        3,
        0,
    )?;
    let mut cases: Vec<(String, crate::cmdp::TabularCmdp, SoftmaxPolicy)> = vec![(
        "single_state".into(),
        single.clone(),
        SoftmaxPolicy::new(vec![vec![0.0]]),
    )];
    for (name, cmdp) in [
        ("cancellation_uniform", build_cancellation_cmdp().cmdp),
        ("cancellation_random", build_cancellation_cmdp().cmdp),
        ("gated_chain_random", build_gated_chain().cmdp),
    ] {
        let theta: Vec<Vec<f64>> = (0..cmdp.n_states)
            .map(|_| {
                (0..cmdp.n_actions)
                    .map(|_| {
                        if name.ends_with("random") {
                            rng.random_range(-1.0..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        cases.push((name.into(), cmdp, SoftmaxPolicy::new(theta)));
    }
    for (name, cmdp, pi) in &cases {
        let check = check_gradient_identity(cmdp, pi, DEFAULT_DELTA, 1e-5)?;
        records.push(CheckRecord::new(
            format!("gradcheck/{name}/q_form_vs_fd"),
            0,
            check.max_dev_q_form,
            check.max_dev_q_form < 1e-6,
        ));
        records.push(CheckRecord::new(
            format!("gradcheck/{name}/advantage_form_vs_fd"),
            0,
            check.max_dev_a_form,
            check.max_dev_a_form < 1e-6,
        ));
        records.push(CheckRecord::new(
            format!("gradcheck/{name}/q_vs_advantage_form"),
            0,
            check.q_vs_a_dev,
            check.q_vs_a_dev < 1e-10,
        ));
    }

    // Dense-network backward pass against central finite differences.
    let value = network_fd_max_rel_error(&mut rng);
    records.push(CheckRecord::new(
        "gradcheck/mlp_backward_fd",
        0,
        value,
        value < 1e-4,
    ));

    // The two clipped-surrogate gradients coincide at the behavior policy.
    let value = l1_l2_gradient_gap(&mut rng)?;
    records.push(CheckRecord::new(
        "gradcheck/l1_l2_gradients_at_origin",
        0,
        value,
        value < 1e-8,
    ));
    Ok(records)
}

fn network_fd_max_rel_error(rng: &mut ChaCha8Rng) -> f64 {
    let net = Mlp::new(&[9, 64, 64, 2], 1.0, rng);
    let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cache = net.forward_cached(&x).expect("dims fixed");
    let mut grads = vec![0.0; net.params.len()];
    net.backward(&cache, &u, &mut grads).expect("dims fixed");
    let loss = |net: &Mlp| -> f64 {
        let y = net.forward(&x).expect("dims fixed");
        y.iter().zip(&u).map(|(a, b)| a * b).sum()
    };
    let h = 1e-5;
    let mut perturbed = net.clone();
    let mut max_rel: f64 = 0.0;
    for i in 0..net.params.len() {
        let orig = perturbed.params[i];
        perturbed.params[i] = orig + h;
        let plus = loss(&perturbed);
        perturbed.params[i] = orig - h;
        let minus = loss(&perturbed);
        perturbed.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = grads[i].abs().max(numeric.abs());
        if denom > 1e-7 {
            max_rel = max_rel.max((grads[i] - numeric).abs() / denom);
        }
    }
    max_rel
}

fn l1_l2_gradient_gap(rng: &mut ChaCha8Rng) -> Result<f64> {
    use crate::nn::{ActionSpace, PolicyNet};
    use crate::trainer::surrogate_term;
    let policy = PolicyNet::new(4, 16, ActionSpace::Continuous(2), rng);
    let mut grads = [
        vec![0.0; policy.mlp.params.len()],
        vec![0.0; policy.mlp.params.len()],
    ];
    let mut ls = [vec![0.0; 2], vec![0.0; 2]];
    for (j, est) in [EstimatorChoice::L1, EstimatorChoice::L2].iter().enumerate() {
        let mut sample_rng = ChaCha8Rng::seed_from_u64(4242);
        for _ in 0..32 {
            let obs: Vec<f64> = (0..4).map(|_| sample_rng.random_range(-1.0..1.0)).collect();
            let (action, old_lp) = policy.sample(&obs, &mut sample_rng)?;
            let adv = sample_rng.random_range(-1.0..1.0);
            let eval = policy.evaluate(&obs, &action)?;
            let (_, dobj) = surrogate_term(*est, old_lp, eval.log_prob, adv, 0.2);
            policy.backward(&eval, -dobj, 0.0, &mut grads[j], &mut ls[j])?;
        }
    }
    Ok(grads[0]
        .iter()
        .zip(&grads[1])
        .chain(ls[0].iter().zip(&ls[1]))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max))
}

/// Enumeration sanity, the value-ordering chain, the stability property of
/// the indicator-weighted objective, estimator bounds, Monte Carlo
/// consistency, and the state-augmentation planning gap.
pub fn run_oracle_suite(master_seed: u64) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();

    // Enumerated distributions normalize on every fixture.
    let mut worst: f64 = 0.0;
    for fixture in all_fixtures() {
        let horizon = fixture.cmdp.horizon_t.min(6);
        let dist = enumerate(
            &fixture.cmdp,
            &fixture.reference_policy,
            fixture.cmdp.initial_state,
            horizon,
            DEFAULT_DELTA,
            DEFAULT_ENUM_CAP,
        )?;
        worst = worst.max((dist.total_probability() - 1.0).abs());
    }
    records.push(CheckRecord::new(
        "oracle/enumeration_normalization",
        0,
        worst,
        worst < 1e-12,
    ));

    // Value ordering in k on fixtures and random instances.
    let chain_ks = [
        KPower::Finite(0),
        KPower::Finite(1),
        KPower::Finite(2),
        KPower::Finite(4),
        KPower::Finite(8),
        KPower::Infinite,
    ];
    let mut violation: f64 = 0.0;
    for fixture in all_fixtures() {
        let vals = Values::new(
            &fixture.cmdp,
            &fixture.reference_policy,
            DEFAULT_DELTA,
            DEFAULT_ENUM_CAP,
        );
        let mut prev = f64::INFINITY;
        for k in chain_ks {
            let v = vals.vr0(1.0, k)?;
            violation = violation.max(v - prev);
            prev = v;
        }
    }
    records.push(CheckRecord::new(
        "oracle/value_ordering_fixtures",
        0,
        violation,
        violation <= 1e-12,
    ));

    let mut violation: f64 = 0.0;
    for i in 0..100 {
        let seed = instance_seed(master_seed, 5000 + i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cmdp = random_cmdp(&mut rng, &RandomCmdpConfig::default());
        let pi = random_policy(&mut rng, cmdp.n_states, cmdp.n_actions);
        let vals = Values::new(&cmdp, &pi, DEFAULT_DELTA, DEFAULT_ENUM_CAP);
        let gamma = rng.random_range(0.5..1.0);
        let mut prev = f64::INFINITY;
        for k in chain_ks {
            let v = vals.vr0(gamma, k)?;
            violation = violation.max(v - prev);
            prev = v;
        }
    }
    records.push(CheckRecord::new(
        "oracle/value_ordering_random",
        master_seed,
        violation,
        violation <= 1e-12,
    ));

    // Stability: every grid maximizer of the indicator-weighted value is
    // fully safe on the cancellation fixture.
    let fixture = build_cancellation_cmdp();
    let mut best = f64::NEG_INFINITY;
    let mut values = Vec::with_capacity(101);
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let pi = grid_policy(&fixture.cmdp, p);
        let vals = Values::new(&fixture.cmdp, &pi, DEFAULT_DELTA, DEFAULT_ENUM_CAP);
        let v = vals.vr0(1.0, KPower::Infinite)?;
        values.push((p, v));
        best = best.max(v);
    }
    let mut min_vc_at_argmax = f64::INFINITY;
    for (p, v) in values {
        if (v - best).abs() <= 1e-12 {
            let pi = grid_policy(&fixture.cmdp, p);
            let vals = Values::new(&fixture.cmdp, &pi, DEFAULT_DELTA, DEFAULT_ENUM_CAP);
            min_vc_at_argmax = min_vc_at_argmax.min(vals.vc0()?);
        }
    }
    records.push(CheckRecord::new(
        "oracle/stability_argmax_is_safe",
        0,
        min_vc_at_argmax,
        min_vc_at_argmax >= 1.0 - 1e-9,
    ));

    // Safety-target estimator bounds over fuzzed monotone flag sequences.
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(master_seed, 6000));
    let mut out_of_range: f64 = 0.0;
    let mut all_safe_gap: f64 = 0.0;
    for _ in 0..100_000 {
        let len = rng.random_range(1..=40usize);
        let brk = rng.random_range(0..=len);
        let flags: Vec<bool> = (0..len).map(|t| t < brk).collect();
        let gamma = rng.random_range(0.05..=1.0f64);
        let targets = vc_gamma_targets(&flags, gamma)?;
        for &v in &targets {
            out_of_range = out_of_range.max((-v).max(v - 1.0));
        }
        if brk == len {
            for &v in &targets {
                all_safe_gap = all_safe_gap.max((v - 1.0).abs());
            }
        }
    }
    records.push(CheckRecord::new(
        "oracle/safety_target_range",
        master_seed,
        out_of_range,
        out_of_range <= 0.0,
    ));
    records.push(CheckRecord::new(
        "oracle/safety_target_all_safe_exact",
        master_seed,
        all_safe_gap,
        all_safe_gap == 0.0,
    ));

    // Monte Carlo consistency: undiscounted safety targets average to the
    // exact safety value.
    let fixture = build_cancellation_cmdp();
    let vals = Values::new(
        &fixture.cmdp,
        &fixture.reference_policy,
        DEFAULT_DELTA,
        DEFAULT_ENUM_CAP,
    );
    let exact = vals.vc0()?;
    let n = 20_000;
    let mut acc = 0.0;
    for i in 0..n {
        let traj = rollout(
            &fixture.cmdp,
            &fixture.reference_policy,
            DEFAULT_DELTA,
            instance_seed(master_seed, 7000 + i),
        )?;
        acc += vc_gamma_targets(&traj.safety_flags, 1.0)?[0];
    }
    let mc = acc / n as f64;
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    records.push(CheckRecord::new(
        "oracle/safety_target_mc_consistency",
        master_seed,
        (mc - exact).abs(),
        (mc - exact).abs() <= 3.0 * sigma,
    ));

    // Empirical safety value of the uniform policy over many rollouts.
    let n = 100_000;
    let mut safe = 0u64;
    for i in 0..n {
        let traj = rollout(
            &fixture.cmdp,
            &fixture.reference_policy,
            DEFAULT_DELTA,
            instance_seed(master_seed, 200_000 + i),
        )?;
        if crate::cmdp::trajectory_safety(&traj)? {
            safe += 1;
        }
    }
    let empirical = safe as f64 / n as f64;
    records.push(CheckRecord::new(
        "oracle/rollout_mc_safety_value",
        master_seed,
        (empirical - 0.75).abs(),
        (empirical - 0.75).abs() < 0.01,
    ));

    // State augmentation: the cost-conditioned optimum strictly beats the
    // best surely-safe stationary policy of the unaugmented chain.
    let gated = build_gated_chain();
    let sol = constrained_dp_solve(&gated.cmdp, 1.0)?;
    records.push(CheckRecord::new(
        "oracle/gated_chain_dp_return",
        0,
        sol.expected_return,
        (sol.expected_return - 5.0).abs() < 1e-12,
    ));
    records.push(CheckRecord::new(
        "oracle/gated_chain_dp_cost",
        0,
        sol.expected_cost,
        (sol.expected_cost - 5.0).abs() < 1e-12,
    ));
    let (_, stationary) = best_surely_safe_stationary(&gated.cmdp, DEFAULT_DELTA, 0.01, 1)?;
    records.push(CheckRecord::new(
        "oracle/augmentation_gap",
        0,
        sol.expected_return - stationary,
        sol.expected_return > stationary + 1e-9,
    ));
    let count = augmented_state_count(&gated.cmdp, 1.0)?;
    records.push(CheckRecord::new(
        "oracle/gated_chain_augmented_state_count",
        0,
        count as f64,
        count == 20,
    ));
    Ok(records)
}

/// Lyapunov-set membership, monotone contraction, the finite-horizon upper
/// bound, the occupancy bound, and the deterministic-case relaxed set check.
pub fn run_lyapunov_suite(master_seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    for i in 0..instances {
        let seed = instance_seed(master_seed, 9000 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cmdp = random_hitting_cmdp(&mut rng, 4, 3);
        let pi = crate::oracle::random_policy(&mut rng, cmdp.n_states, cmdp.n_actions);
        let d_pi = expected_cumulative_d(&cmdp, &pi)?;
        cmdp.d0 = d_pi[cmdp.x0];

        // Fixed-point candidate and one strictly dominating candidate.
        let margin = 0.5;
        let lifted: Vec<f64> = d_pi
            .iter()
            .zip(&cmdp.terminal)
            .map(|(v, &t)| if t { 0.0 } else { v + margin })
            .collect();
        let candidates = [
            ("fixed_point", LyapunovCandidate { values: d_pi.clone() }, cmdp.d0),
            (
                "lifted",
                LyapunovCandidate { values: lifted },
                cmdp.d0 + margin,
            ),
        ];
        for (label, candidate, d0) in candidates {
            let mut scoped = cmdp.clone();
            scoped.d0 = d0;
            let (member, witness) = is_lyapunov(&scoped, &pi, &candidate)?;
            records.push(CheckRecord::new(
                format!("lyapunov/{label}/membership"),
                seed,
                witness.map(|w| w as f64).unwrap_or(-1.0),
                member,
            ));
            let slack = monotone_contraction_slack(&scoped, &pi, &candidate, 10);
            records.push(CheckRecord::new(
                format!("lyapunov/{label}/contraction_slack"),
                seed,
                slack,
                slack >= -1e-9,
            ));
            let slack = check_upper_bound_lemma(&scoped, &pi, &candidate, 10)?;
            records.push(CheckRecord::new(
                format!("lyapunov/{label}/upper_bound_slack"),
                seed,
                slack,
                slack >= -1e-9,
            ));
            let slack = occupancy_bound_slack(&scoped, &pi, &candidate, 11);
            records.push(CheckRecord::new(
                format!("lyapunov/{label}/occupancy_slack"),
                seed,
                slack,
                slack >= -1e-9,
            ));
        }

        // The exact expected cost is a fixed point of its Bellman operator.
        let image = crate::lyapunov::bellman_apply_d(&cmdp, &pi, &d_pi);
        let residual = image
            .iter()
            .zip(&d_pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        records.push(CheckRecord::new(
            "lyapunov/fixed_point_residual",
            seed,
            residual,
            residual < 1e-10,
        ));
    }

    // Deterministic relaxed-set check on the gated chain: splice the
    // cost-conditioned optimum into the conservative always-leave policy.
    let gated = build_gated_chain();
    let sol = constrained_dp_solve(&gated.cmdp, 1.0)?;
    let optimal_trajectory = sol
        .optimal_trajectory
        .ok_or_else(|| Error::Infeasible("gated chain optimum should be deterministic".into()))?;
    let (hitting, index) = hitting_from_augmented(&gated.cmdp, 1.0, &[0])?;
    let mut optimal_actions = std::collections::HashMap::new();
    for (s, q, a) in optimal_trajectory {
        if let Some(&x) = index.get(&(s, q)) {
            optimal_actions.insert(x, a);
        }
    }
    let pi_b = TablePolicy::new(vec![vec![1.0, 0.0]; hitting.n_states]);
    let (ok, _) = relaxed_induced_set_check(&hitting, &optimal_actions, &pi_b)?;
    records.push(CheckRecord::new(
        "lyapunov/relaxed_set_gated_chain",
        0,
        if ok { 1.0 } else { 0.0 },
        ok,
    ));
    Ok(records)
}
