//! Structured per-step training records.

use serde::Serialize;

/// One optimization step's diagnostics, one entry per agent where a field is
/// agent-specific.
///
/// `per_agent_mean_delta` holds the mean marginal contribution observed for
/// each agent this step; agents for which the topology defines no marginal
/// (the solver in the handoff topology, or a lone voter) report zero.
/// `grad_norms` are pre-clip gradient norms; unscheduled or frozen agents
/// report zero. `gate` is present only for the handoff topology.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub per_agent_mean_delta: Vec<f64>,
    pub per_agent_mean_advantage: Vec<f64>,
    pub gate: Option<f64>,
    pub train_accuracy: f64,
    pub max_kl: f64,
    pub grad_norms: Vec<f64>,
}
