//! Stochastic policies over augmented tabular states.
//!
//! Policies see the augmented state `(s, q)` — a base state index plus the
//! running cumulative cost — so cost-conditioned behavior is expressible.
//! Most reference policies ignore `q`; the dynamic-programming solution of
//! the constrained problem does not.

use std::collections::HashMap;

/// A stochastic policy over augmented states.
///
/// Implementations must be pure: the returned distribution may depend only on
/// `(state, q)`, never on call order.
pub trait Policy {
    /// Action distribution at augmented state `(state, q)`.
    fn action_probs(&self, state: usize, q: f64) -> Vec<f64>;
}

/// Uniform distribution over all actions everywhere.
#[derive(Debug, Clone)]
pub struct UniformPolicy {
    n_actions: usize,
}

impl UniformPolicy {
    pub fn new(n_actions: usize) -> Self {
        Self { n_actions }
    }
}

impl Policy for UniformPolicy {
    fn action_probs(&self, _state: usize, _q: f64) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_actions]
    }
}

/// Tabular policy with one explicit distribution per base state.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePolicy {
    pub rows: Vec<Vec<f64>>,
}

impl TablePolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    /// Uniform table over `n_states` x `n_actions`.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            rows: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }
}

impl Policy for TablePolicy {
    fn action_probs(&self, state: usize, _q: f64) -> Vec<f64> {
        self.rows[state].clone()
    }
}

/// Softmax-parameterized tabular policy over base states.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    /// Logits indexed `[state][action]`.
    pub theta: Vec<Vec<f64>>,
}

impl SoftmaxPolicy {
    pub fn new(theta: Vec<Vec<f64>>) -> Self {
        Self { theta }
    }

    pub fn probs_for(&self, state: usize) -> Vec<f64> {
        softmax(&self.theta[state])
    }

    /// Gradient of `log pi(action | state)` with respect to the state's
    /// logit row: `e_action - pi(. | state)`.
    pub fn grad_log_prob(&self, state: usize, action: usize) -> Vec<f64> {
        let probs = self.probs_for(state);
        let mut g: Vec<f64> = probs.iter().map(|p| -p).collect();
        g[action] += 1.0;
        g
    }
}

impl Policy for SoftmaxPolicy {
    fn action_probs(&self, state: usize, _q: f64) -> Vec<f64> {
        self.probs_for(state)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Deterministic policy over augmented states `(s, q)` with costs on an
/// integer grid, as produced by the constrained dynamic-programming solver.
///
/// `q` is quantized by `resolution` before lookup; unseen states fall back
/// to a fixed action.
#[derive(Debug, Clone)]
pub struct AugmentedLookupPolicy {
    pub actions: HashMap<(usize, i64), usize>,
    pub n_actions: usize,
    pub resolution: f64,
    pub fallback: usize,
}

impl AugmentedLookupPolicy {
    pub fn quantize(&self, q: f64) -> i64 {
        (q / self.resolution).round() as i64
    }
}

impl Policy for AugmentedLookupPolicy {
    fn action_probs(&self, state: usize, q: f64) -> Vec<f64> {
        let action = *self
            .actions
            .get(&(state, self.quantize(q)))
            .unwrap_or(&self.fallback);
        let mut probs = vec![0.0; self.n_actions];
        probs[action] = 1.0;
        probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }

    #[test]
    fn softmax_grad_log_prob_sums_to_zero_in_expectation() {
        let pi = SoftmaxPolicy::new(vec![vec![0.3, -0.7, 1.1]]);
        let probs = pi.probs_for(0);
        let mut acc = vec![0.0; 3];
        for a in 0..3 {
            let g = pi.grad_log_prob(0, a);
            for (acc_i, g_i) in acc.iter_mut().zip(&g) {
                *acc_i += probs[a] * g_i;
            }
        }
        for v in acc {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn augmented_lookup_uses_quantized_cost() {
        let mut actions = HashMap::new();
        actions.insert((0, 2), 1);
        let pi = AugmentedLookupPolicy {
            actions,
            n_actions: 2,
            resolution: 1.0,
            fallback: 0,
        };
        assert_eq!(pi.action_probs(0, 2.0), vec![0.0, 1.0]);
        assert_eq!(pi.action_probs(0, 3.0), vec![1.0, 0.0]);
    }
}
