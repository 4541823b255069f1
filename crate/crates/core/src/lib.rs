//! Counterfactual credit policy optimization for small cooperative agent teams.
//!
//! A team of softmax policies earns a single 0/1 team reward per rollout. This
//! crate turns that team reward into agent-specific learning signals by
//! comparing each rollout against a counterfactual in which one agent's
//! contribution is removed, then shapes the resulting marginal contributions
//! with running statistics and within-prompt group normalization before a
//! clipped policy-gradient update.
//!
//! Two collaboration topologies are built in:
//!
//! * [`sequential`] — a two-agent handoff where the first agent writes a
//!   message and the second answers; the counterfactual lets the second agent
//!   answer without the message.
//! * [`voting`] — K agents answer independently and a deterministic plurality
//!   rule (ties abstain) aggregates; the counterfactual re-applies the rule
//!   with one ballot removed, at zero extra sampling cost.
//!
//! The [`oracles`] module verifies the estimator theory behind the method on
//! enumerable instances: unbiasedness against exact enumerated gradients,
//! optimal-baseline agreement, variance comparisons, the clip-to-KL bound, and
//! a trust-region block-update gain bound on small tabular MDPs.

pub mod credit;
pub mod env;
pub mod error;
pub mod oracles;
pub mod policy;
pub mod report;
pub mod rng;
pub mod sequential;
pub mod trainer;
pub mod voting;

pub use error::{Error, Result};
