//! Safe-reinforcement-learning laboratory: constrained tabular MDPs with a
//! cumulative-cost budget, a safety critic that nullifies rewards earned by
//! violating the budget, exact small-instance oracles for every quantity the
//! trainer estimates, and desk-scale constrained control environments.

pub mod cmdp;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod lyapunov;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod report;
pub mod suites;
pub mod toys;
pub mod trainer;

pub use cmdp::{
    augment_q, q_clip, rollout, safety_flag, trajectory_safety, AugmentedObservation, Step,
    TabularCmdp, Trajectory,
};
pub use envs::Env;
pub use error::{Error, Result};
pub use oracle::KPower;
pub use policy::Policy;
pub use trainer::{IterationMetrics, TrainConfig, Trainer};
