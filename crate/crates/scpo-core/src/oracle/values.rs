//! Memoized exact value recursions on the augmented chain.
//!
//! Each quantity is a finite-horizon expectation indexed by `(t, s, q)`:
//! `t` is the time step, `s` the base state, `q` the cumulative cost accrued
//! up to and including `s`. Memo keys use the exact bit pattern of `q`; the
//! prefix sums reaching a node are computed identically along shared paths,
//! so collisions cannot produce wrong values, only cache misses.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;

use crate::cmdp::{q_clip, safety_flag, TabularCmdp};
use crate::error::{Error, Result};
use crate::policy::Policy;

use super::KPower;

type Key = (usize, usize, u64);

/// Exact finite-horizon evaluator for one `(cmdp, policy)` pair.
pub struct Values<'a> {
    pub cmdp: &'a TabularCmdp,
    pub policy: &'a dyn Policy,
    pub delta: f64,
    cap: u64,
    nodes: Cell<u64>,
    vc_cache: RefCell<HashMap<Key, f64>>,
    vr_cache: RefCell<HashMap<(u32, u64, Key), f64>>,
    vrc_cache: RefCell<HashMap<(u32, u64, u64, Key), f64>>,
    cost_cache: RefCell<HashMap<(u64, Key), f64>>,
    probs_cache: RefCell<HashMap<(usize, u64), Vec<f64>>>,
}

impl<'a> Values<'a> {
    pub fn new(cmdp: &'a TabularCmdp, policy: &'a dyn Policy, delta: f64, cap: u64) -> Self {
        Self {
            cmdp,
            policy,
            delta,
            cap,
            nodes: Cell::new(0),
            vc_cache: RefCell::new(HashMap::new()),
            vr_cache: RefCell::new(HashMap::new()),
            vrc_cache: RefCell::new(HashMap::new()),
            cost_cache: RefCell::new(HashMap::new()),
            probs_cache: RefCell::new(HashMap::new()),
        }
    }

    /// Cumulative cost after entering the initial state.
    pub fn initial_q(&self) -> f64 {
        self.cmdp.cost[self.cmdp.initial_state]
    }

    fn bump(&self) -> Result<()> {
        let n = self.nodes.get() + 1;
        self.nodes.set(n);
        if n > self.cap {
            return Err(Error::BudgetExceeded {
                leaves: n,
                cap: self.cap,
            });
        }
        Ok(())
    }

    fn flag(&self, q: f64) -> bool {
        safety_flag(q_clip(q, self.cmdp.budget_c0, self.delta))
    }

    pub(crate) fn probs(&self, s: usize, q: f64) -> Result<Vec<f64>> {
        let key = (s, q.to_bits());
        if let Some(p) = self.probs_cache.borrow().get(&key) {
            return Ok(p.clone());
        }
        let p = self.policy.action_probs(s, q);
        if p.len() != self.cmdp.n_actions {
            return Err(Error::DimensionMismatch {
                expected: self.cmdp.n_actions,
                got: p.len(),
            });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonNormalizedPolicy { state: s, sum });
        }
        self.probs_cache.borrow_mut().insert(key, p.clone());
        Ok(p)
    }

    // -- safety values ------------------------------------------------------

    /// Probability that states `s_t .. s_{T-1}` all stay within budget, given
    /// the augmented state `(s, q)` at time `t`.
    pub fn vc(&self, t: usize, s: usize, q: f64) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(1.0);
        }
        let key = (t, s, q.to_bits());
        if let Some(&v) = self.vc_cache.borrow().get(&key) {
            return Ok(v);
        }
        self.bump()?;
        let v = if !self.flag(q) {
            0.0
        } else {
            let probs = self.probs(s, q)?;
            let mut acc = 0.0;
            for (a, &pa) in probs.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                acc += pa * self.suffix_after_action(t, s, q, a)?;
            }
            acc
        };
        self.vc_cache.borrow_mut().insert(key, v);
        Ok(v)
    }

    /// `sum_{s'} P(s' | s, a) vc(t + 1, s', q + cost(s'))`.
    fn suffix_after_action(&self, t: usize, s: usize, q: f64, a: usize) -> Result<f64> {
        let mut acc = 0.0;
        for s_next in 0..self.cmdp.n_states {
            let p = self.cmdp.p(s, a, s_next);
            if p == 0.0 {
                continue;
            }
            acc += p * self.vc(t + 1, s_next, q + self.cmdp.cost[s_next])?;
        }
        Ok(acc)
    }

    /// Safety Q-value at `(t, s, q)` with the first action forced.
    pub fn qc(&self, t: usize, s: usize, q: f64, a: usize) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(1.0);
        }
        if !self.flag(q) {
            return Ok(0.0);
        }
        self.suffix_after_action(t, s, q, a)
    }

    /// Safety advantage `qc - vc`.
    pub fn ac(&self, t: usize, s: usize, q: f64, a: usize) -> Result<f64> {
        Ok(self.qc(t, s, q, a)? - self.vc(t, s, q)?)
    }

    /// Safety value from the episode start.
    pub fn vc0(&self) -> Result<f64> {
        self.vc(0, self.cmdp.initial_state, self.initial_q())
    }

    /// Safety Q-value from the episode start.
    pub fn qc0(&self, action: usize) -> Result<f64> {
        self.qc(0, self.cmdp.initial_state, self.initial_q(), action)
    }

    // -- reward values weighted by safety powers -----------------------------

    /// `E[sum_{t' >= t} gamma^(t'-t) r(S_t', A_t') qc(...)^k]`. With `k = 0`
    /// this is the plain value function.
    pub fn vr(&self, t: usize, s: usize, q: f64, gamma: f64, k: KPower) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(0.0);
        }
        let key = (k.cache_key(), gamma.to_bits(), (t, s, q.to_bits()));
        if let Some(&v) = self.vr_cache.borrow().get(&key) {
            return Ok(v);
        }
        self.bump()?;
        let probs = self.probs(s, q)?;
        let mut acc = 0.0;
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            acc += pa * self.qr(t, s, q, a, gamma, k)?;
        }
        self.vr_cache.borrow_mut().insert(key, acc);
        Ok(acc)
    }

    pub fn qr(&self, t: usize, s: usize, q: f64, a: usize, gamma: f64, k: KPower) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(0.0);
        }
        let mut acc = self.cmdp.r(s, a) * k.apply(self.qc(t, s, q, a)?);
        for s_next in 0..self.cmdp.n_states {
            let p = self.cmdp.p(s, a, s_next);
            if p == 0.0 {
                continue;
            }
            acc += gamma * p * self.vr(t + 1, s_next, q + self.cmdp.cost[s_next], gamma, k)?;
        }
        Ok(acc)
    }

    pub fn ar(&self, t: usize, s: usize, q: f64, a: usize, gamma: f64, k: KPower) -> Result<f64> {
        Ok(self.qr(t, s, q, a, gamma, k)? - self.vr(t, s, q, gamma, k)?)
    }

    pub fn vr0(&self, gamma: f64, k: KPower) -> Result<f64> {
        self.vr(0, self.cmdp.initial_state, self.initial_q(), gamma, k)
    }

    pub fn ar0(&self, action: usize, gamma: f64, k: KPower) -> Result<f64> {
        self.ar(
            0,
            self.cmdp.initial_state,
            self.initial_q(),
            action,
            gamma,
            k,
        )
    }

    // -- reward values with the beta cost term --------------------------------

    /// `E[sum gamma^t (r (Q^c)^k - beta (1 - (Q^c)^k) c(S_t))]`.
    pub fn vrc(
        &self,
        t: usize,
        s: usize,
        q: f64,
        gamma: f64,
        k: KPower,
        beta: f64,
    ) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(0.0);
        }
        let key = (
            k.cache_key(),
            beta.to_bits(),
            gamma.to_bits(),
            (t, s, q.to_bits()),
        );
        if let Some(&v) = self.vrc_cache.borrow().get(&key) {
            return Ok(v);
        }
        self.bump()?;
        let probs = self.probs(s, q)?;
        let mut acc = 0.0;
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            acc += pa * self.qrc(t, s, q, a, gamma, k, beta)?;
        }
        self.vrc_cache.borrow_mut().insert(key, acc);
        Ok(acc)
    }

    pub fn qrc(
        &self,
        t: usize,
        s: usize,
        q: f64,
        a: usize,
        gamma: f64,
        k: KPower,
        beta: f64,
    ) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(0.0);
        }
        let pow = k.apply(self.qc(t, s, q, a)?);
        let mut acc = self.cmdp.r(s, a) * pow - beta * (1.0 - pow) * self.cmdp.cost[s];
        for s_next in 0..self.cmdp.n_states {
            let p = self.cmdp.p(s, a, s_next);
            if p == 0.0 {
                continue;
            }
            acc += gamma
                * p
                * self.vrc(t + 1, s_next, q + self.cmdp.cost[s_next], gamma, k, beta)?;
        }
        Ok(acc)
    }

    pub fn arc(
        &self,
        t: usize,
        s: usize,
        q: f64,
        a: usize,
        gamma: f64,
        k: KPower,
        beta: f64,
    ) -> Result<f64> {
        Ok(self.qrc(t, s, q, a, gamma, k, beta)? - self.vrc(t, s, q, gamma, k, beta)?)
    }

    pub fn vrc0(&self, gamma: f64, k: KPower, beta: f64) -> Result<f64> {
        self.vrc(
            0,
            self.cmdp.initial_state,
            self.initial_q(),
            gamma,
            k,
            beta,
        )
    }

    // -- cumulative cost ------------------------------------------------------

    /// `E[sum_{t' >= t} gamma^(t'-t) c(S_t')]`.
    pub fn cost_value(&self, t: usize, s: usize, q: f64, gamma: f64) -> Result<f64> {
        if t >= self.cmdp.horizon_t {
            return Ok(0.0);
        }
        let key = (gamma.to_bits(), (t, s, q.to_bits()));
        if let Some(&v) = self.cost_cache.borrow().get(&key) {
            return Ok(v);
        }
        self.bump()?;
        let probs = self.probs(s, q)?;
        let mut acc = self.cmdp.cost[s];
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for s_next in 0..self.cmdp.n_states {
                let p = self.cmdp.p(s, a, s_next);
                if p == 0.0 {
                    continue;
                }
                acc += gamma
                    * pa
                    * p
                    * self.cost_value(t + 1, s_next, q + self.cmdp.cost[s_next], gamma)?;
            }
        }
        self.cost_cache.borrow_mut().insert(key, acc);
        Ok(acc)
    }
}

/// `E_policy[sum_{t} gamma^t g(t, S_t, q_t, A_t)]` from the episode start,
/// expanding only branches with nonzero probability.
pub fn expect_under<F>(
    cmdp: &TabularCmdp,
    policy: &dyn Policy,
    gamma: f64,
    mut g: F,
) -> Result<f64>
where
    F: FnMut(usize, usize, f64, usize) -> Result<f64>,
{
    let mut memo: HashMap<Key, f64> = HashMap::new();
    fn rec<F>(
        cmdp: &TabularCmdp,
        policy: &dyn Policy,
        gamma: f64,
        g: &mut F,
        memo: &mut HashMap<Key, f64>,
        t: usize,
        s: usize,
        q: f64,
    ) -> Result<f64>
    where
        F: FnMut(usize, usize, f64, usize) -> Result<f64>,
    {
        if t >= cmdp.horizon_t {
            return Ok(0.0);
        }
        let key = (t, s, q.to_bits());
        if let Some(&v) = memo.get(&key) {
            return Ok(v);
        }
        let probs = policy.action_probs(s, q);
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonNormalizedPolicy { state: s, sum });
        }
        let mut acc = 0.0;
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let mut term = g(t, s, q, a)?;
            for s_next in 0..cmdp.n_states {
                let p = cmdp.p(s, a, s_next);
                if p == 0.0 {
                    continue;
                }
                term += gamma
                    * p
                    * rec(
                        cmdp,
                        policy,
                        gamma,
                        g,
                        memo,
                        t + 1,
                        s_next,
                        q + cmdp.cost[s_next],
                    )?;
            }
            acc += pa * term;
        }
        memo.insert(key, acc);
        Ok(acc)
    }
    let q0 = cmdp.cost[cmdp.initial_state];
    rec(
        cmdp,
        policy,
        gamma,
        &mut g,
        &mut memo,
        0,
        cmdp.initial_state,
        q0,
    )
}

/// All `(t, s, q)` triples reachable with positive probability under the
/// policy, starting from the episode's initial augmented state.
pub fn reachable_augmented(cmdp: &TabularCmdp, policy: &dyn Policy) -> Vec<(usize, usize, f64)> {
    let mut seen: HashMap<Key, f64> = HashMap::new();
    let mut frontier = vec![(0usize, cmdp.initial_state, cmdp.cost[cmdp.initial_state])];
    seen.insert(
        (0, cmdp.initial_state, cmdp.cost[cmdp.initial_state].to_bits()),
        cmdp.cost[cmdp.initial_state],
    );
    while let Some((t, s, q)) = frontier.pop() {
        if t + 1 >= cmdp.horizon_t {
            continue;
        }
        let probs = policy.action_probs(s, q);
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for s_next in 0..cmdp.n_states {
                if cmdp.p(s, a, s_next) == 0.0 {
                    continue;
                }
                let q_next = q + cmdp.cost[s_next];
                let key = (t + 1, s_next, q_next.to_bits());
                if seen.insert(key, q_next).is_none() {
                    frontier.push((t + 1, s_next, q_next));
                }
            }
        }
    }
    seen.into_keys()
        .map(|(t, s, qb)| (t, s, f64::from_bits(qb)))
        .collect()
}
