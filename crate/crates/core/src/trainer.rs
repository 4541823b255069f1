//! Group-relative policy optimization loop over either topology.
//!
//! Each step samples a batch of prompts, collects N rollouts per prompt,
//! turns team rewards into per-agent advantages according to the configured
//! credit mode, and applies one clipped policy-gradient update per scheduled
//! agent. Collection is on-policy with a single gradient pass, so every
//! importance ratio is exactly 1 and the surrogate's gradient coincides with
//! the score-times-advantage estimator; the clipped form still governs the
//! loss surface and is exercised off-policy by its own unit tests.
//!
//! Statistics ordering: all standardization within a step uses the statistics
//! as they stood at the start of the step; the step's observations are folded
//! into the moving averages afterwards, aggregated over the whole prompt
//! batch. The solver's trust gate is likewise computed once per step from
//! pre-update statistics.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::credit::{group_advantage, RunningStats, ShapingConfig};
use crate::env::{SequentialTaskEnv, VotingTaskEnv};
use crate::error::{Error, Result};
use crate::policy::LogLinearPolicy;
use crate::report::StepReport;
use crate::rng;
use crate::sequential::{
    collect_pairs, solver_advantages_frozen, thinker_advantages_frozen, trust_gate,
    SequentialRollout,
};
use crate::sequential::GateState;
use crate::voting::{allocate, collect_votes, direct_advantages_frozen, joint_advantages};

/// Which agents receive an update on a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Synchronous,
    Alternating,
}

/// How team rewards become per-agent advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CreditMode {
    /// Counterfactual marginal contributions through the full shaping
    /// pipeline.
    Ccpo,
    /// Every agent takes the group-normalized team reward directly.
    Shared,
}

/// Advantage scheme for the voting topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VotingScheme {
    /// Per-agent shaping of marginal contributions.
    Direct,
    /// Joint within-prompt advantage split by non-negative marginal weights.
    Allocated,
}

/// All optimization and shaping hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub samples_per_prompt: usize,
    pub clip_eps: f64,
    pub grad_clip: f64,
    pub alpha: f64,
    pub eta: f64,
    pub ema_decay: f64,
    pub min_samples: u64,
    pub epsilon: f64,
    pub schedule: Schedule,
    pub credit_mode: CreditMode,
    pub voting_scheme: VotingScheme,
    pub steps: u64,
    pub seed: u64,
}

/// Learning rate suited to the built-in log-linear policies. The schema
/// default of 1e-6 targets much larger models; desk experiments should
/// override with this value.
pub const TOY_LEARNING_RATE: f64 = 0.5;

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            batch_size: 64,
            samples_per_prompt: 4,
            clip_eps: 0.2,
            grad_clip: 1.0,
            alpha: 1.0,
            eta: 1.0,
            ema_decay: 0.99,
            min_samples: 50,
            epsilon: 1e-8,
            schedule: Schedule::Synchronous,
            credit_mode: CreditMode::Ccpo,
            voting_scheme: VotingScheme::Direct,
            steps: 100,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
            Ok(())
        }
        positive("learning_rate", self.learning_rate)?;
        positive("grad_clip", self.grad_clip)?;
        positive("alpha", self.alpha)?;
        positive("eta", self.eta)?;
        positive("epsilon", self.epsilon)?;
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if self.samples_per_prompt < 2 {
            return Err(Error::InvalidInput(format!(
                "samples_per_prompt must be at least 2 for group normalization, got {}",
                self.samples_per_prompt
            )));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::InvalidInput(format!(
                "clip_eps must lie in (0, 1), got {}",
                self.clip_eps
            )));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::InvalidInput(format!(
                "ema_decay must lie in (0, 1), got {}",
                self.ema_decay
            )));
        }
        if self.min_samples == 0 {
            return Err(Error::InvalidInput("min_samples must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be positive".into()));
        }
        Ok(())
    }

    pub fn shaping(&self) -> ShapingConfig {
        ShapingConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
        }
    }
}

/// Handoff-topology training state.
#[derive(Debug, Clone)]
pub struct SequentialState {
    pub env: SequentialTaskEnv,
    pub thinker: LogLinearPolicy,
    pub solver: LogLinearPolicy,
    pub gate: GateState,
    /// Agents excluded from parameter updates (index 0 = thinker).
    pub frozen: [bool; 2],
}

impl SequentialState {
    /// Uniform policies over the environment's context maps.
    pub fn fresh(env: SequentialTaskEnv, config: &TrainerConfig) -> Result<Self> {
        let thinker = LogLinearPolicy::uniform(env.prompts, env.messages)?;
        let solver = LogLinearPolicy::uniform(env.solver_context_count(), env.answers)?;
        let gate = GateState::new(config.ema_decay, config.min_samples, config.eta)?;
        Ok(Self {
            env,
            thinker,
            solver,
            gate,
            frozen: [false, false],
        })
    }
}

/// Voting-topology training state.
#[derive(Debug, Clone)]
pub struct VotingState {
    pub env: VotingTaskEnv,
    pub policies: Vec<LogLinearPolicy>,
    pub stats: Vec<RunningStats>,
    pub frozen: Vec<bool>,
}

impl VotingState {
    pub fn fresh(env: VotingTaskEnv, config: &TrainerConfig) -> Result<Self> {
        let policies = (0..env.voters)
            .map(|_| LogLinearPolicy::uniform(env.prompts, env.answers))
            .collect::<Result<Vec<_>>>()?;
        let stats = (0..env.voters)
            .map(|_| RunningStats::new(config.ema_decay, config.min_samples))
            .collect::<Result<Vec<_>>>()?;
        let frozen = vec![false; env.voters];
        Ok(Self {
            env,
            policies,
            stats,
            frozen,
        })
    }
}

#[derive(Debug, Clone)]
pub enum TrainerState {
    Sequential(SequentialState),
    Voting(VotingState),
}

impl TrainerState {
    pub fn num_agents(&self) -> usize {
        match self {
            TrainerState::Sequential(_) => 2,
            TrainerState::Voting(s) => s.env.voters,
        }
    }
}

/// Accumulates a mean score-times-advantage gradient over one agent's
/// parameter table and applies a clipped ascent step.
struct GradientAccumulator {
    actions: usize,
    grad: Vec<f64>,
    visited: BTreeSet<usize>,
    samples: usize,
}

impl GradientAccumulator {
    fn new(policy: &LogLinearPolicy) -> Self {
        Self {
            actions: policy.actions(),
            grad: vec![0.0; policy.params().len()],
            visited: BTreeSet::new(),
            samples: 0,
        }
    }

    fn add(&mut self, policy: &LogLinearPolicy, context: usize, action: usize, advantage: f64) -> Result<()> {
        let probs = policy.probs(context)?;
        let base = context * self.actions;
        for (a, p) in probs.iter().enumerate() {
            self.grad[base + a] -= advantage * p;
        }
        self.grad[base + action] += advantage;
        self.visited.insert(context);
        self.samples += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<(Vec<f64>, BTreeSet<usize>, f64)> {
        if self.samples > 0 {
            let scale = 1.0 / self.samples as f64;
            for g in &mut self.grad {
                *g *= scale;
            }
        }
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(
                "policy-gradient accumulation produced a non-finite value".to_string(),
            ));
        }
        let norm = self.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        Ok((self.grad, self.visited, norm))
    }
}

fn kl_divergence_rows(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .filter(|(o, _)| **o > 0.0)
        .map(|(o, n)| o * (o / n).ln())
        .sum()
}

/// Applies one ascent step to a policy and returns the maximum KL divergence
/// from the old policy over the contexts visited this step.
fn apply_update(
    policy: &mut LogLinearPolicy,
    grad: &[f64],
    norm: f64,
    visited: &BTreeSet<usize>,
    learning_rate: f64,
    grad_clip: f64,
) -> Result<f64> {
    let scale = if norm > grad_clip { grad_clip / norm } else { 1.0 };
    let old_probs: Vec<(usize, Vec<f64>)> = visited
        .iter()
        .map(|c| policy.probs(*c).map(|p| (*c, p)))
        .collect::<Result<_>>()?;
    for (param, g) in policy.params_mut().iter_mut().zip(grad) {
        *param += learning_rate * scale * g;
    }
    let mut max_kl: f64 = 0.0;
    for (context, old) in &old_probs {
        let new = policy.probs(*context)?;
        max_kl = max_kl.max(kl_divergence_rows(old, &new));
    }
    if !max_kl.is_finite() {
        return Err(Error::NonFiniteGradient(
            "KL monitor produced a non-finite value".to_string(),
        ));
    }
    Ok(max_kl)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Optimization loop state: configuration, policies, statistics, and the
/// run's random stream.
pub struct Trainer {
    pub config: TrainerConfig,
    pub state: TrainerState,
    step_index: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainerConfig, state: TrainerState) -> Result<Self> {
        config.validate()?;
        if let TrainerState::Voting(v) = &state {
            if config.credit_mode == CreditMode::Ccpo && v.env.voters < 2 {
                return Err(Error::InvalidInput(
                    "counterfactual credit in the voting topology needs at least 2 voters"
                        .to_string(),
                ));
            }
        }
        let rng = rng::seeded(config.seed);
        Ok(Self {
            config,
            state,
            step_index: 0,
            rng,
        })
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    fn agent_scheduled(&self, agent: usize) -> bool {
        match self.config.schedule {
            Schedule::Synchronous => true,
            Schedule::Alternating => {
                self.step_index % self.state.num_agents() as u64 == agent as u64
            }
        }
    }

    /// Runs one optimization step and returns its diagnostics.
    pub fn step(&mut self) -> Result<StepReport> {
        match &self.state {
            TrainerState::Sequential(_) => self.step_sequential(),
            TrainerState::Voting(_) => self.step_voting(),
        }
    }

    /// Runs `config.steps` steps.
    pub fn run(&mut self) -> Result<Vec<StepReport>> {
        let mut reports = Vec::with_capacity(self.config.steps as usize);
        for _ in 0..self.config.steps {
            reports.push(self.step()?);
        }
        Ok(reports)
    }

    fn step_sequential(&mut self) -> Result<StepReport> {
        let cfg = self.config.clone();
        let shaping = cfg.shaping();
        let scheduled = [self.agent_scheduled(0), self.agent_scheduled(1)];
        let TrainerState::Sequential(state) = &mut self.state else {
            unreachable!()
        };

        let mut groups: Vec<Vec<SequentialRollout>> = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let prompt = self.rng.random_range(0..state.env.prompts);
            groups.push(collect_pairs(
                &state.thinker,
                &state.solver,
                &state.env,
                prompt,
                cfg.samples_per_prompt,
                &mut self.rng,
            )?);
        }

        let gate_value = trust_gate(&state.gate, cfg.epsilon);
        let mut thinker_acc = GradientAccumulator::new(&state.thinker);
        let mut solver_acc = GradientAccumulator::new(&state.solver);
        let mut all_deltas = Vec::new();
        let mut all_joint = Vec::new();
        let mut all_solo = Vec::new();
        let mut thinker_advs = Vec::new();
        let mut solver_advs = Vec::new();

        for rollouts in &groups {
            let (a_thinker, a_solver) = match cfg.credit_mode {
                CreditMode::Ccpo => {
                    let t = thinker_advantages_frozen(rollouts, &state.gate.delta_stats, &shaping)?;
                    let (s, _) = solver_advantages_frozen(rollouts, &state.gate, cfg.epsilon)?;
                    (t.advantages, s.advantages)
                }
                CreditMode::Shared => {
                    let team: Vec<f64> = rollouts.iter().map(|r| r.joint_reward).collect();
                    let a = group_advantage(&team, cfg.epsilon)?;
                    (a.clone(), a)
                }
            };
            for (r, (at, asv)) in rollouts.iter().zip(a_thinker.iter().zip(&a_solver)) {
                thinker_acc.add(&state.thinker, r.prompt, r.message, *at)?;
                let ctx = state.env.solver_context(r.prompt, r.message);
                solver_acc.add(&state.solver, ctx, r.answer, *asv)?;
                all_deltas.push(r.delta());
                all_joint.push(r.joint_reward);
                all_solo.push(r.solo_reward);
            }
            thinker_advs.extend(a_thinker);
            solver_advs.extend(a_solver);
        }

        // fold this step's observations into the moving averages
        state.gate.delta_stats.update(&all_deltas)?;
        state.gate.joint_stats.update(&all_joint)?;
        state.gate.solo_stats.update(&all_solo)?;

        let mut grad_norms = vec![0.0; 2];
        let mut max_kl: f64 = 0.0;

        let (t_grad, t_visited, t_norm) = thinker_acc.finish()?;
        grad_norms[0] = t_norm;
        if scheduled[0] && !state.frozen[0] {
            max_kl = max_kl.max(apply_update(
                &mut state.thinker,
                &t_grad,
                t_norm,
                &t_visited,
                cfg.learning_rate,
                cfg.grad_clip,
            )?);
        } else {
            grad_norms[0] = if state.frozen[0] { 0.0 } else { t_norm };
        }
        let (s_grad, s_visited, s_norm) = solver_acc.finish()?;
        grad_norms[1] = if state.frozen[1] { 0.0 } else { s_norm };
        if scheduled[1] && !state.frozen[1] {
            max_kl = max_kl.max(apply_update(
                &mut state.solver,
                &s_grad,
                s_norm,
                &s_visited,
                cfg.learning_rate,
                cfg.grad_clip,
            )?);
        }

        let report = StepReport {
            step: self.step_index,
            per_agent_mean_delta: vec![mean(&all_deltas), 0.0],
            per_agent_mean_advantage: vec![mean(&thinker_advs), mean(&solver_advs)],
            gate: Some(gate_value),
            train_accuracy: mean(&all_joint),
            max_kl,
            grad_norms,
        };
        self.step_index += 1;
        Ok(report)
    }

    fn step_voting(&mut self) -> Result<StepReport> {
        let cfg = self.config.clone();
        let shaping = cfg.shaping();
        let TrainerState::Voting(state) = &self.state else {
            unreachable!()
        };
        let k = state.env.voters;
        let scheduled: Vec<bool> = (0..k).map(|a| self.agent_scheduled(a)).collect();
        let TrainerState::Voting(state) = &mut self.state else {
            unreachable!()
        };

        let mut groups = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let prompt = self.rng.random_range(0..state.env.prompts);
            groups.push(collect_votes(
                &state.policies,
                &state.env,
                prompt,
                cfg.samples_per_prompt,
                &mut self.rng,
            )?);
        }

        let mut accs: Vec<GradientAccumulator> = state
            .policies
            .iter()
            .map(GradientAccumulator::new)
            .collect();
        let mut step_deltas: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut step_advs: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut team_rewards = Vec::new();

        for rollouts in &groups {
            let advantages: Vec<Vec<f64>> = match cfg.credit_mode {
                CreditMode::Shared => {
                    let team: Vec<f64> = rollouts.iter().map(|r| r.team_reward).collect();
                    let a = group_advantage(&team, cfg.epsilon)?;
                    vec![a; k]
                }
                CreditMode::Ccpo => match cfg.voting_scheme {
                    VotingScheme::Direct => {
                        let deltas: Vec<Vec<f64>> = (0..k)
                            .map(|i| rollouts.iter().map(|r| r.per_agent_delta[i]).collect())
                            .collect();
                        direct_advantages_frozen(&deltas, &state.stats, &shaping)?
                            .into_iter()
                            .map(|b| b.advantages)
                            .collect()
                    }
                    VotingScheme::Allocated => {
                        let team: Vec<f64> = rollouts.iter().map(|r| r.team_reward).collect();
                        let joint = joint_advantages(&team, cfg.epsilon)?;
                        let mut per_agent = vec![Vec::with_capacity(rollouts.len()); k];
                        for (r, ja) in rollouts.iter().zip(&joint) {
                            let split = allocate(*ja, &r.per_agent_delta, cfg.epsilon);
                            for (agent, value) in split.into_iter().enumerate() {
                                per_agent[agent].push(value);
                            }
                        }
                        per_agent
                    }
                },
            };
            for (j, r) in rollouts.iter().enumerate() {
                team_rewards.push(r.team_reward);
                for agent in 0..k {
                    let adv = advantages[agent][j];
                    accs[agent].add(&state.policies[agent], r.prompt, r.answers[agent], adv)?;
                    step_deltas[agent].push(r.per_agent_delta[agent]);
                    step_advs[agent].push(adv);
                }
            }
        }

        for (stats, deltas) in state.stats.iter_mut().zip(&step_deltas) {
            stats.update(deltas)?;
        }

        let mut grad_norms = vec![0.0; k];
        let mut max_kl: f64 = 0.0;
        for (agent, acc) in accs.into_iter().enumerate() {
            let (grad, visited, norm) = acc.finish()?;
            grad_norms[agent] = if state.frozen[agent] { 0.0 } else { norm };
            if scheduled[agent] && !state.frozen[agent] {
                max_kl = max_kl.max(apply_update(
                    &mut state.policies[agent],
                    &grad,
                    norm,
                    &visited,
                    cfg.learning_rate,
                    cfg.grad_clip,
                )?);
            }
        }

        let report = StepReport {
            step: self.step_index,
            per_agent_mean_delta: step_deltas.iter().map(|d| mean(d)).collect(),
            per_agent_mean_advantage: step_advs.iter().map(|a| mean(a)).collect(),
            gate: None,
            train_accuracy: mean(&team_rewards),
            max_kl,
            grad_norms,
        };
        self.step_index += 1;
        Ok(report)
    }

    /// Greedy team accuracy over one sweep of the prompt set. Greedy policies
    /// are deterministic, so one sweep is exhaustive.
    pub fn evaluate(&self) -> Result<f64> {
        match &self.state {
            TrainerState::Sequential(s) => {
                let mut hits = 0.0;
                for p in 0..s.env.prompts {
                    let message = s.thinker.greedy(p)?;
                    let answer = s.solver.greedy(s.env.solver_context(p, message))?;
                    hits += s.env.reward(p, answer);
                }
                Ok(hits / s.env.prompts as f64)
            }
            TrainerState::Voting(s) => {
                let mut hits = 0.0;
                for p in 0..s.env.prompts {
                    let answers: Vec<usize> = s
                        .policies
                        .iter()
                        .map(|policy| policy.greedy(p))
                        .collect::<Result<_>>()?;
                    let decision = crate::voting::vote(&answers, Default::default())?;
                    hits += decision.reward(s.env.truth(p));
                }
                Ok(hits / s.env.prompts as f64)
            }
        }
    }

    /// Greedy solver accuracy answering from the prompt alone. Only defined
    /// for the handoff topology.
    pub fn solo_evaluate(&self) -> Result<f64> {
        match &self.state {
            TrainerState::Sequential(s) => {
                let mut hits = 0.0;
                for p in 0..s.env.prompts {
                    let answer = s.solver.greedy(s.env.solver_solo_context(p))?;
                    hits += s.env.reward(p, answer);
                }
                Ok(hits / s.env.prompts as f64)
            }
            TrainerState::Voting(_) => Err(Error::InvalidInput(
                "solo evaluation is only defined for the sequential topology".to_string(),
            )),
        }
    }
}
