//! Executable verification of the estimator and trust-region theory on
//! enumerable instances.
//!
//! * [`scenario`] — one-prompt estimation scenarios with exact enumerated
//!   gradients, Monte Carlo estimator means/variances, optimal-baseline
//!   estimation with a grid-search cross-check, and shared-vs-counterfactual
//!   variance comparisons with bootstrap error bars.
//! * [`kl`] — the ratio-clip to KL-divergence bound.
//! * [`mdp`] — exact tabular MDP solves and the block-update gain bound.
//! * [`battery`] — named scenario batteries and pass/fail suite runners.

pub mod battery;
pub mod kl;
pub mod mdp;
pub mod scenario;

pub use battery::{scenario_battery, SuiteCheck};
pub use kl::{clip_kl_check, kl_divergence, random_ratio_bounded_pair, ClipKlReport};
pub use mdp::{
    block_gain_check, induced_mdp_for_thinker, trust_region_constant, BlockGainReport, MdpPolicy,
    TabularMdp,
};
pub use scenario::{
    mc_gradient, optimal_baseline, variance_comparison, BaselineReport, Draw, EstimatorKind,
    EstimatorSpec, McGradient, Scenario, VarianceReport,
};
