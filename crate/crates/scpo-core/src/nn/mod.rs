//! Minimal dense-network stack: two-hidden-layer tanh networks, Gaussian and
//! categorical policy heads, the squashed safety-critic head, exact
//! reverse-mode gradients, and Adam.

mod adam;
mod checkpoint;
mod heads;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use heads::{
    squash_safety, standard_normal, Action, ActionSpace, PolicyEval, PolicyNet, SafetyCriticNet,
    ValueNet,
};
pub use mlp::{ForwardCache, Mlp};
