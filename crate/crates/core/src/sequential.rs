//! Two-agent handoff topology: a thinker writes a message, a solver answers.
//!
//! Each joint rollout is paired with a counterfactual in which the solver
//! answers without the message. The pair shares one uniform draw (common
//! random numbers), so removing the thinker's contribution really does keep
//! "everything else" of the sampling instance fixed: a solver whose joint and
//! solo contexts carry identical action distributions produces identical
//! answers on both paths and the thinker's marginal contribution is exactly
//! zero per rollout, not merely in expectation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::credit::{group_advantage, shape, AdvantageBatch, RunningStats, ShapingConfig};
use crate::env::SequentialTaskEnv;
use crate::error::{Error, Result};
use crate::policy::LogLinearPolicy;

/// One joint rollout and its paired solo counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRollout {
    pub prompt: usize,
    pub message: usize,
    pub answer: usize,
    pub joint_reward: f64,
    pub solo_answer: usize,
    pub solo_reward: f64,
    pub thinker_logprob: f64,
    pub solver_logprob: f64,
    pub solver_solo_logprob: f64,
}

impl SequentialRollout {
    /// Thinker's marginal contribution on this rollout.
    pub fn delta(&self) -> f64 {
        self.joint_reward - self.solo_reward
    }
}

/// Running statistics feeding the solver's trust gate and fused reward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateState {
    pub delta_stats: RunningStats,
    pub joint_stats: RunningStats,
    pub solo_stats: RunningStats,
    pub eta: f64,
}

impl GateState {
    pub fn new(decay: f64, min_samples: u64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gate sharpness eta must be strictly positive, got {eta}"
            )));
        }
        Ok(Self {
            delta_stats: RunningStats::new(decay, min_samples)?,
            joint_stats: RunningStats::new(decay, min_samples)?,
            solo_stats: RunningStats::new(decay, min_samples)?,
            eta,
        })
    }
}

/// Collects `n` joint rollouts for one prompt, each paired with a freshly
/// indexed solo counterfactual that reuses the rollout's uniform draw.
pub fn collect_pairs<R: Rng + ?Sized>(
    thinker: &LogLinearPolicy,
    solver: &LogLinearPolicy,
    env: &SequentialTaskEnv,
    prompt: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SequentialRollout>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rollouts per prompt, got {n}"
        )));
    }
    if prompt >= env.prompts {
        return Err(Error::InvalidInput(format!(
            "prompt {prompt} out of range (env has {})",
            env.prompts
        )));
    }
    let mut rollouts = Vec::with_capacity(n);
    for _ in 0..n {
        let message = thinker.sample(prompt, rng)?;
        let joint_ctx = env.solver_context(prompt, message);
        let solo_ctx = env.solver_solo_context(prompt);
        // one uniform drives both the joint answer and its counterfactual
        let u: f64 = rng.random();
        let answer = solver.sample_with_uniform(joint_ctx, u)?;
        let solo_answer = solver.sample_with_uniform(solo_ctx, u)?;
        rollouts.push(SequentialRollout {
            prompt,
            message,
            answer,
            joint_reward: env.reward(prompt, answer),
            solo_answer,
            solo_reward: env.reward(prompt, solo_answer),
            thinker_logprob: thinker.log_prob(prompt, message)?,
            solver_logprob: solver.log_prob(joint_ctx, answer)?,
            solver_solo_logprob: solver.log_prob(solo_ctx, solo_answer)?,
        });
    }
    Ok(rollouts)
}

/// Largest f64 strictly below 1, for keeping the gate inside (0, 1).
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Trust coefficient `sigmoid(eta * mean_delta / (std_delta + epsilon))`,
/// clamped strictly inside (0, 1).
pub fn trust_gate(gate: &GateState, epsilon: f64) -> f64 {
    debug_assert!(epsilon > 0.0);
    let u = gate.eta * gate.delta_stats.mean() / (gate.delta_stats.std() + epsilon);
    let g = 1.0 / (1.0 + (-u).exp());
    g.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

/// Thinker advantages computed against frozen (pre-update) statistics:
/// standardize each marginal contribution, shape it, and normalize within the
/// group. Does not touch the statistics.
pub fn thinker_advantages_frozen(
    rollouts: &[SequentialRollout],
    delta_stats: &RunningStats,
    shaping: &ShapingConfig,
) -> Result<AdvantageBatch> {
    let shaped: Vec<f64> = rollouts
        .iter()
        .map(|r| shape(delta_stats.standardize(r.delta(), shaping.epsilon), shaping.alpha))
        .collect();
    AdvantageBatch::from_shaped(shaped, shaping.epsilon)
}

/// Thinker advantages for one batch: standardize with the statistics as they
/// stand, then fold the batch's marginal contributions into them.
pub fn thinker_advantages(
    rollouts: &[SequentialRollout],
    delta_stats: &mut RunningStats,
    shaping: &ShapingConfig,
) -> Result<AdvantageBatch> {
    let batch = thinker_advantages_frozen(rollouts, delta_stats, shaping)?;
    let deltas: Vec<f64> = rollouts.iter().map(SequentialRollout::delta).collect();
    delta_stats.update(&deltas)?;
    Ok(batch)
}

/// Fused solver scores `g * z_joint + (1 - g) * z_solo` for an explicit gate
/// value.
pub fn fused_scores(
    rollouts: &[SequentialRollout],
    gate_value: f64,
    joint_stats: &RunningStats,
    solo_stats: &RunningStats,
    epsilon: f64,
) -> Vec<f64> {
    rollouts
        .iter()
        .map(|r| {
            let z_joint = joint_stats.standardize(r.joint_reward, epsilon);
            let z_solo = solo_stats.standardize(r.solo_reward, epsilon);
            gate_value * z_joint + (1.0 - gate_value) * z_solo
        })
        .collect()
}

/// Solver advantages against frozen statistics. The gate value comes from the
/// current (pre-update) marginal-contribution statistics and applies to every
/// rollout in the batch. Returns the batch together with the gate value used.
pub fn solver_advantages_frozen(
    rollouts: &[SequentialRollout],
    gate: &GateState,
    epsilon: f64,
) -> Result<(AdvantageBatch, f64)> {
    let g = trust_gate(gate, epsilon);
    let fused = fused_scores(rollouts, g, &gate.joint_stats, &gate.solo_stats, epsilon);
    Ok((AdvantageBatch::from_shaped(fused, epsilon)?, g))
}

/// Solver advantages for one batch; folds the batch's joint and solo rewards
/// into their statistics afterwards.
pub fn solver_advantages(
    rollouts: &[SequentialRollout],
    gate: &mut GateState,
    epsilon: f64,
) -> Result<(AdvantageBatch, f64)> {
    let out = solver_advantages_frozen(rollouts, gate, epsilon)?;
    let joint: Vec<f64> = rollouts.iter().map(|r| r.joint_reward).collect();
    let solo: Vec<f64> = rollouts.iter().map(|r| r.solo_reward).collect();
    gate.joint_stats.update(&joint)?;
    gate.solo_stats.update(&solo)?;
    Ok(out)
}

/// Shared-reward baseline: every agent takes the group-normalized team reward
/// directly, with no counterfactual correction.
pub fn shared_advantages(rollouts: &[SequentialRollout], epsilon: f64) -> Result<Vec<f64>> {
    let team: Vec<f64> = rollouts.iter().map(|r| r.joint_reward).collect();
    group_advantage(&team, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credit::shape;
    use crate::env::{make_freerider_env, make_hint_env, strong_solver, DETERMINISTIC_LOGIT};
    use crate::rng;

    fn deterministic_thinker(env: &SequentialTaskEnv, message: usize) -> LogLinearPolicy {
        let mut p = LogLinearPolicy::uniform(env.prompts, env.messages).unwrap();
        for prompt in 0..env.prompts {
            p.set_logit(prompt, message, DETERMINISTIC_LOGIT).unwrap();
        }
        p
    }

    #[test]
    fn deterministic_policies_yield_identical_rollouts() {
        let env = make_hint_env();
        let thinker = deterministic_thinker(&env, 2);
        let mut solver = LogLinearPolicy::uniform(env.solver_context_count(), env.answers).unwrap();
        solver.set_logit(2, 1, DETERMINISTIC_LOGIT).unwrap();
        solver.set_logit(4, 0, DETERMINISTIC_LOGIT).unwrap();
        let mut rng = rng::seeded(5);
        let rollouts = collect_pairs(&thinker, &solver, &env, 1, 6, &mut rng).unwrap();
        let first = rollouts[0].clone();
        for r in &rollouts {
            assert_eq!(*r, first);
        }
    }

    #[test]
    fn message_independent_deterministic_solver_nulls_every_delta() {
        let env = make_freerider_env();
        let thinker = LogLinearPolicy::uniform(env.prompts, env.messages).unwrap();
        let solver = strong_solver(&env, None).unwrap();
        let mut rng = rng::seeded(9);
        for prompt in 0..env.prompts {
            let rollouts = collect_pairs(&thinker, &solver, &env, prompt, 32, &mut rng).unwrap();
            assert!(rollouts.iter().all(|r| r.delta() == 0.0));
        }
    }

    #[test]
    fn message_independent_stochastic_solver_nulls_every_delta() {
        // the shared uniform makes joint and solo answers coincide whenever
        // the solver's two context rows are identical, even off the greedy arm
        let env = make_freerider_env();
        let thinker = LogLinearPolicy::uniform(env.prompts, env.messages).unwrap();
        let solver = strong_solver(&env, Some(0.7)).unwrap();
        let mut rng = rng::seeded(10);
        for prompt in 0..env.prompts {
            let rollouts = collect_pairs(&thinker, &solver, &env, prompt, 256, &mut rng).unwrap();
            assert!(rollouts.iter().all(|r| r.answer == r.solo_answer));
            assert!(rollouts.iter().all(|r| r.delta() == 0.0));
        }
    }

    #[test]
    fn uniform_solver_joint_reward_mean_is_half() {
        let env = make_hint_env();
        let thinker = LogLinearPolicy::uniform(env.prompts, env.messages).unwrap();
        let solver = LogLinearPolicy::uniform(env.solver_context_count(), env.answers).unwrap();
        let mut rng = rng::seeded(1234);
        let rollouts = collect_pairs(&thinker, &solver, &env, 0, 100_000, &mut rng).unwrap();
        let mean: f64 =
            rollouts.iter().map(|r| r.joint_reward).sum::<f64>() / rollouts.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean joint reward {mean}");
    }

    fn rollout_with_delta(delta: f64) -> SequentialRollout {
        let (joint, solo) = if delta > 0.0 {
            (1.0, 0.0)
        } else if delta < 0.0 {
            (0.0, 1.0)
        } else {
            (0.0, 0.0)
        };
        SequentialRollout {
            prompt: 0,
            message: 0,
            answer: 0,
            joint_reward: joint,
            solo_answer: 0,
            solo_reward: solo,
            thinker_logprob: 0.0,
            solver_logprob: 0.0,
            solver_solo_logprob: 0.0,
        }
    }

    #[test]
    fn thinker_advantages_constant_deltas_are_zero() {
        let rollouts: Vec<_> = (0..4).map(|_| rollout_with_delta(1.0)).collect();
        let mut stats = RunningStats::new(0.99, 50).unwrap();
        let batch =
            thinker_advantages(&rollouts, &mut stats, &ShapingConfig::default()).unwrap();
        assert_eq!(batch.advantages, vec![0.0; 4]);
        assert_eq!(stats.observed_count(), 4);
    }

    #[test]
    fn thinker_advantages_compose_shape_and_group_normalization() {
        let rollouts: Vec<_> = [1.0, 0.0, 0.0, 1.0]
            .iter()
            .map(|d| rollout_with_delta(*d))
            .collect();
        let mut stats = RunningStats::new(0.99, 50).unwrap();
        let batch =
            thinker_advantages(&rollouts, &mut stats, &ShapingConfig::default()).unwrap();
        let t = shape(1.0, 1.0);
        assert!((batch.shaped_rewards[0] - t).abs() < 1e-12);
        assert_eq!(batch.shaped_rewards[1], 0.0);
        assert!((batch.advantages[0] - 0.866025).abs() < 1e-6);
        assert!((batch.advantages[1] + 0.866025).abs() < 1e-6);
    }

    #[test]
    fn thinker_advantages_antisymmetric_pair() {
        let rollouts: Vec<_> = [1.0, -1.0].iter().map(|d| rollout_with_delta(*d)).collect();
        let mut stats = RunningStats::new(0.99, 50).unwrap();
        let batch =
            thinker_advantages(&rollouts, &mut stats, &ShapingConfig::default()).unwrap();
        assert!((batch.advantages[0] - 0.707106).abs() < 1e-6);
        assert!((batch.advantages[1] + 0.707106).abs() < 1e-6);
    }

    #[test]
    fn trust_gate_values() {
        let mut gate = GateState::new(0.99, 50, 1.0).unwrap();
        assert_eq!(trust_gate(&gate, 1e-8), 0.5);

        // mean/std ratio of exactly 1 (up to the epsilon guard)
        gate.delta_stats = RunningStats::with_state(0.5, 0.25, 0.99, 100, 50).unwrap();
        let g = trust_gate(&gate, 1e-8);
        assert!((g - 0.731059).abs() < 1e-6);

        // saturation stays strictly below 1
        gate.delta_stats = RunningStats::with_state(40.0, 1.0, 0.99, 100, 50).unwrap();
        let g = trust_gate(&gate, 1.0); // ratio 40 / (1 + 1) = 20 -> eta*20
        assert!(g < 1.0);
        gate.eta = 2.0;
        let g = trust_gate(&gate, 1.0);
        assert!(g < 1.0 && (1.0 - g) < 1e-12);
    }

    #[test]
    fn trust_gate_monotone_in_mean() {
        let eta = 1.3;
        let mut previous = f64::NEG_INFINITY;
        for k in -20..=20 {
            let mean = k as f64 * 0.1;
            let gate = GateState {
                delta_stats: RunningStats::with_state(mean, 0.5, 0.99, 100, 50).unwrap(),
                joint_stats: RunningStats::new(0.99, 50).unwrap(),
                solo_stats: RunningStats::new(0.99, 50).unwrap(),
                eta,
            };
            let g = trust_gate(&gate, 1e-8);
            assert!(g > previous, "gate must increase with the delta mean");
            previous = g;
        }
    }

    fn rollout_with_rewards(joint: f64, solo: f64) -> SequentialRollout {
        SequentialRollout {
            prompt: 0,
            message: 0,
            answer: 0,
            joint_reward: joint,
            solo_answer: 0,
            solo_reward: solo,
            thinker_logprob: 0.0,
            solver_logprob: 0.0,
            solver_solo_logprob: 0.0,
        }
    }

    #[test]
    fn fused_scores_endpoints_select_single_stream() {
        let rollouts = vec![
            rollout_with_rewards(1.0, 0.0),
            rollout_with_rewards(0.0, 1.0),
            rollout_with_rewards(1.0, 1.0),
            rollout_with_rewards(0.0, 0.0),
        ];
        let joint_stats = RunningStats::with_state(0.5, 0.25, 0.99, 100, 50).unwrap();
        let solo_stats = RunningStats::with_state(0.25, 0.1875, 0.99, 100, 50).unwrap();
        let eps = 1e-8;

        let at_one = fused_scores(&rollouts, 1.0, &joint_stats, &solo_stats, eps);
        let z_joint: Vec<f64> = rollouts
            .iter()
            .map(|r| joint_stats.standardize(r.joint_reward, eps))
            .collect();
        assert_eq!(at_one, z_joint);

        let at_zero = fused_scores(&rollouts, 0.0, &joint_stats, &solo_stats, eps);
        let z_solo: Vec<f64> = rollouts
            .iter()
            .map(|r| solo_stats.standardize(r.solo_reward, eps))
            .collect();
        assert_eq!(at_zero, z_solo);
    }

    #[test]
    fn fused_scores_cancel_at_half_gate() {
        // identical activated stats make z_joint = -z_solo for mirrored rewards
        let stats = RunningStats::with_state(0.5, 0.25, 0.99, 100, 50).unwrap();
        let rollouts = vec![
            rollout_with_rewards(1.0, 0.0),
            rollout_with_rewards(0.0, 1.0),
        ];
        let fused = fused_scores(&rollouts, 0.5, &stats, &stats, 1e-8);
        for f in &fused {
            assert!(f.abs() < 1e-12);
        }
        let batch = AdvantageBatch::from_shaped(fused, 1e-8).unwrap();
        assert_eq!(batch.advantages, vec![0.0; 2]);
    }

    #[test]
    fn fused_scores_stay_between_streams() {
        let joint_stats = RunningStats::with_state(0.4, 0.3, 0.99, 100, 50).unwrap();
        let solo_stats = RunningStats::with_state(0.6, 0.1, 0.99, 100, 50).unwrap();
        let rollouts = vec![
            rollout_with_rewards(1.0, 0.0),
            rollout_with_rewards(0.0, 1.0),
            rollout_with_rewards(1.0, 1.0),
        ];
        let gate = GateState {
            delta_stats: RunningStats::with_state(0.2, 0.5, 0.99, 100, 50).unwrap(),
            joint_stats: joint_stats.clone(),
            solo_stats: solo_stats.clone(),
            eta: 1.0,
        };
        let (batch, g) = solver_advantages_frozen(&rollouts, &gate, 1e-8).unwrap();
        assert!(g > 0.0 && g < 1.0);
        for (r, fused) in rollouts.iter().zip(&batch.shaped_rewards) {
            let zj = joint_stats.standardize(r.joint_reward, 1e-8);
            let zs = solo_stats.standardize(r.solo_reward, 1e-8);
            assert!(*fused >= zj.min(zs) - 1e-12 && *fused <= zj.max(zs) + 1e-12);
        }
    }

    #[test]
    fn pairing_permutation_leaves_mean_delta_unchanged() {
        // the batch mean of deltas depends only on the two reward streams
        let env = make_hint_env();
        let thinker = LogLinearPolicy::uniform(env.prompts, env.messages).unwrap();
        let solver = LogLinearPolicy::uniform(env.solver_context_count(), env.answers).unwrap();
        let mut rng = rng::seeded(77);
        let rollouts = collect_pairs(&thinker, &solver, &env, 0, 512, &mut rng).unwrap();
        let direct: f64 = rollouts.iter().map(SequentialRollout::delta).sum();
        let mut joint: Vec<f64> = rollouts.iter().map(|r| r.joint_reward).collect();
        let solo: Vec<f64> = rollouts.iter().map(|r| r.solo_reward).collect();
        joint.rotate_left(97); // arbitrary re-pairing
        let permuted: f64 = joint.iter().zip(&solo).map(|(j, s)| j - s).sum();
        assert!((direct - permuted).abs() < 1e-9);
    }

    #[test]
    fn collect_pairs_rejects_tiny_groups() {
        let env = make_hint_env();
        let thinker = LogLinearPolicy::uniform(env.prompts, env.messages).unwrap();
        let solver = LogLinearPolicy::uniform(env.solver_context_count(), env.answers).unwrap();
        let mut rng = rng::seeded(0);
        assert!(collect_pairs(&thinker, &solver, &env, 0, 1, &mut rng).is_err());
        assert!(collect_pairs(&thinker, &solver, &env, 99, 4, &mut rng).is_err());
    }
}
