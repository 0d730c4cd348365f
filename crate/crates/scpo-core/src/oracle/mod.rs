//! Exact evaluation of every value function, Q-function and advantage used by
//! the trainer, on small finite CMDPs, plus mechanical checks of the
//! identities and bounds they satisfy.
//!
//! All quantities live on the *augmented* chain whose states are pairs
//! `(s, q)` of a base state and the cumulative cost accrued so far. Safety
//! values are probabilities of the remaining trajectory staying within
//! budget; reward values optionally weight each reward by a power of the
//! safety Q-function.

mod batch;
mod checks;
mod dp;
mod enumerate;
mod values;

pub use batch::{instance_seed, random_cmdp, random_policy, RandomCmdpConfig, MASTER_SEED};
pub use checks::{
    advantage_substitution_residual, check_first_order_expansion, check_gradient_identity,
    check_policy_difference_identity, check_surrogate_bounds, check_vrc_surrogate_bounds,
    grad_vc_fd, grad_vc_reinforce, qc_identity_residual, DifferenceForm, GradCheck, GradForm,
    SurrogateSlacks,
};
pub use dp::{
    augmented_state_count, best_surely_safe_stationary, constrained_dp_solve,
    ConstrainedDpSolution,
};
pub use enumerate::{
    enumerate, enumerate_from, exact_qc, exact_vc, safe_mass, safe_probability,
    EnumeratedDistribution,
};
pub use values::{expect_under, reachable_augmented, Values};

/// Exponent applied to the safety Q-function inside reward-cancelling values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KPower {
    Finite(u32),
    Infinite,
}

/// Equality tolerance realizing the `k = infinity` indicator on `Q^c = 1`.
pub const K_INFINITY_TOL: f64 = 1e-9;

/// Default leaf budget for exhaustive enumeration.
pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

impl KPower {
    /// `x^k`, with `x^0 = 1` (including `x = 0`) and `k = infinity` realized
    /// as the indicator of `x = 1` up to [`K_INFINITY_TOL`].
    pub fn apply(self, x: f64) -> f64 {
        match self {
            KPower::Finite(0) => 1.0,
            KPower::Finite(k) => x.powi(k as i32),
            KPower::Infinite => {
                if x >= 1.0 - K_INFINITY_TOL {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn cache_key(self) -> u32 {
        match self {
            KPower::Finite(k) => k,
            KPower::Infinite => u32::MAX,
        }
    }
}

impl std::fmt::Display for KPower {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KPower::Finite(k) => write!(f, "{k}"),
            KPower::Infinite => write!(f, "inf"),
        }
    }
}

impl serde::Serialize for KPower {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            KPower::Finite(k) => serializer.serialize_u32(*k),
            KPower::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> serde::Deserialize<'de> for KPower {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = KPower;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a nonnegative integer or the string \"inf\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<KPower, E> {
                u32::try_from(v)
                    .map(KPower::Finite)
                    .map_err(|_| E::custom("k exponent out of range"))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<KPower, E> {
                u32::try_from(v)
                    .map(KPower::Finite)
                    .map_err(|_| E::custom("k exponent must be nonnegative"))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<KPower, E> {
                v.parse().map_err(|e| E::custom(format!("{e}")))
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

impl std::str::FromStr for KPower {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "infinity" => Ok(KPower::Infinite),
            other => other
                .parse::<u32>()
                .map(KPower::Finite)
                .map_err(|e| crate::error::Error::Parse(format!("k value `{other}`: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_power_conventions() {
        assert_eq!(KPower::Finite(0).apply(0.0), 1.0);
        assert_eq!(KPower::Finite(2).apply(0.5), 0.25);
        assert_eq!(KPower::Infinite.apply(1.0), 1.0);
        assert_eq!(KPower::Infinite.apply(1.0 - 1e-10), 1.0);
        assert_eq!(KPower::Infinite.apply(0.999), 0.0);
    }

    #[test]
    fn k_power_parses() {
        assert_eq!("inf".parse::<KPower>().unwrap(), KPower::Infinite);
        assert_eq!("4".parse::<KPower>().unwrap(), KPower::Finite(4));
        assert!("-1".parse::<KPower>().is_err());
    }
}
