//! K-agent voting topology: independent ballots, a deterministic plurality
//! rule, and removal counterfactuals that need no extra sampling.
//!
//! The rule returns the unique plurality answer; any tie for the maximum
//! count (including all-distinct ballots) abstains, and an abstention always
//! scores zero. Determinism keeps pivotality well-defined: an agent's
//! marginal contribution is nonzero exactly when removing its ballot flips
//! the decision's correctness.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::credit::{group_advantage, shape, AdvantageBatch, RunningStats, ShapingConfig};
use crate::env::VotingTaskEnv;
use crate::error::{Error, Result};
use crate::policy::LogLinearPolicy;

/// Aggregation rule. Only strict plurality with abstaining ties is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteRule {
    #[default]
    StrictPluralityOrAbstain,
}

/// Outcome of applying the rule to a multiset of ballots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Answer(usize),
    Abstain,
}

impl Decision {
    /// Exact-match reward against a truth answer; abstention scores zero.
    pub fn reward(&self, truth: usize) -> f64 {
        match self {
            Decision::Answer(a) if *a == truth => 1.0,
            _ => 0.0,
        }
    }
}

/// Applies the rule: unique plurality winner, or abstain on a tied maximum.
pub fn vote(answers: &[usize], _rule: VoteRule) -> Result<Decision> {
    if answers.is_empty() {
        return Err(Error::InvalidInput(
            "cannot vote on an empty ballot set".to_string(),
        ));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(*a).or_insert(0) += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let mut winners = counts.iter().filter(|(_, c)| **c == max);
    let first = winners.next().map(|(a, _)| *a);
    match (first, winners.next()) {
        (Some(a), None) => Ok(Decision::Answer(a)),
        _ => Ok(Decision::Abstain),
    }
}

/// Team reward plus, per agent, the reward after removing that agent's
/// ballot and the resulting marginal contribution. Draws nothing: the
/// counterfactuals reuse the ballots already sampled.
pub fn counterfactual_rewards(
    answers: &[usize],
    truth: usize,
    rule: VoteRule,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if answers.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "removal counterfactuals need at least 2 ballots, got {}",
            answers.len()
        )));
    }
    let team = vote(answers, rule)?.reward(truth);
    let mut cf_rewards = Vec::with_capacity(answers.len());
    let mut deltas = Vec::with_capacity(answers.len());
    let mut reduced = Vec::with_capacity(answers.len() - 1);
    for skip in 0..answers.len() {
        reduced.clear();
        reduced.extend(
            answers
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, a)| *a),
        );
        let cf = vote(&reduced, rule)?.reward(truth);
        cf_rewards.push(cf);
        deltas.push(team - cf);
    }
    Ok((team, cf_rewards, deltas))
}

/// One voting rollout with its removal counterfactuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingRollout {
    pub prompt: usize,
    pub answers: Vec<usize>,
    pub decision: Decision,
    pub team_reward: f64,
    pub per_agent_cf_reward: Vec<f64>,
    pub per_agent_delta: Vec<f64>,
    pub per_agent_logprob: Vec<f64>,
}

/// Samples `n` rollouts for one prompt. Counterfactuals are computed from the
/// sampled ballots when there are at least two voters; a single voter has no
/// removal counterfactual and gets zero-filled columns.
pub fn collect_votes<R: Rng + ?Sized>(
    policies: &[LogLinearPolicy],
    env: &VotingTaskEnv,
    prompt: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<VotingRollout>> {
    if policies.len() != env.voters {
        return Err(Error::InvalidInput(format!(
            "need one policy per voter ({}), got {}",
            env.voters,
            policies.len()
        )));
    }
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
    let truth = env.truth(prompt);
    let rule = VoteRule::default();
    let mut rollouts = Vec::with_capacity(n);
    for _ in 0..n {
        let mut answers = Vec::with_capacity(env.voters);
        let mut logprobs = Vec::with_capacity(env.voters);
        for policy in policies {
            let a = policy.sample(prompt, rng)?;
            logprobs.push(policy.log_prob(prompt, a)?);
            answers.push(a);
        }
        let decision = vote(&answers, rule)?;
        let team_reward = decision.reward(truth);
        let (cf, deltas) = if env.voters >= 2 {
            let (team_check, cf, deltas) = counterfactual_rewards(&answers, truth, rule)?;
            debug_assert_eq!(team_check, team_reward);
            (cf, deltas)
        } else {
            (vec![0.0; 1], vec![0.0; 1])
        };
        rollouts.push(VotingRollout {
            prompt,
            answers,
            decision,
            team_reward,
            per_agent_cf_reward: cf,
            per_agent_delta: deltas,
            per_agent_logprob: logprobs,
        });
    }
    Ok(rollouts)
}

/// Within-prompt normalization of the team rewards themselves (the joint
/// ranking that the allocation scheme distributes among agents).
pub fn joint_advantages(team_rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    group_advantage(team_rewards, epsilon)
}

/// Splits one joint advantage across agents by normalized non-negative
/// marginal contributions. Agents with non-positive contributions get exactly
/// zero; weights sum to at most one.
pub fn allocate(joint_advantage: f64, deltas: &[f64], epsilon: f64) -> Vec<f64> {
    debug_assert!(epsilon > 0.0);
    let total: f64 = deltas.iter().map(|d| d.max(0.0)).sum();
    deltas
        .iter()
        .map(|d| d.max(0.0) / (total + epsilon) * joint_advantage)
        .collect()
}

/// Per-agent pipeline against frozen statistics: standardize each agent's
/// marginal contributions, shape them, and normalize within the prompt group.
pub fn direct_advantages_frozen(
    deltas_per_agent: &[Vec<f64>],
    per_agent_stats: &[RunningStats],
    shaping: &ShapingConfig,
) -> Result<Vec<AdvantageBatch>> {
    if deltas_per_agent.len() != per_agent_stats.len() {
        return Err(Error::InvalidInput(format!(
            "need one statistics stream per agent ({}), got {}",
            deltas_per_agent.len(),
            per_agent_stats.len()
        )));
    }
    deltas_per_agent
        .iter()
        .zip(per_agent_stats)
        .map(|(deltas, stats)| {
            let shaped: Vec<f64> = deltas
                .iter()
                .map(|d| shape(stats.standardize(*d, shaping.epsilon), shaping.alpha))
                .collect();
            AdvantageBatch::from_shaped(shaped, shaping.epsilon)
        })
        .collect()
}

/// Per-agent pipeline that folds each agent's batch into its statistics after
/// standardization.
pub fn direct_advantages(
    deltas_per_agent: &[Vec<f64>],
    per_agent_stats: &mut [RunningStats],
    shaping: &ShapingConfig,
) -> Result<Vec<AdvantageBatch>> {
    let batches = direct_advantages_frozen(deltas_per_agent, per_agent_stats, shaping)?;
    for (deltas, stats) in deltas_per_agent.iter().zip(per_agent_stats.iter_mut()) {
        stats.update(deltas)?;
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{biased_voter, make_pivotal_env};
    use crate::rng;
    use proptest::prelude::*;
    use rand::RngCore;

    const RULE: VoteRule = VoteRule::StrictPluralityOrAbstain;

    #[test]
    fn vote_strict_majority_and_ties() {
        assert_eq!(vote(&[0, 0, 1], RULE).unwrap(), Decision::Answer(0));
        assert_eq!(vote(&[0, 1, 2], RULE).unwrap(), Decision::Abstain);
        assert_eq!(vote(&[0, 1], RULE).unwrap(), Decision::Abstain);
        assert_eq!(vote(&[3], RULE).unwrap(), Decision::Answer(3));
        assert!(vote(&[], RULE).is_err());
    }

    #[test]
    fn vote_is_deterministic_on_multisets() {
        assert_eq!(vote(&[1, 0, 0], RULE).unwrap(), vote(&[0, 1, 0], RULE).unwrap());
        assert_eq!(vote(&[2, 2, 1, 1], RULE).unwrap(), Decision::Abstain);
    }

    // exhaustive re-derivation of team/cf/delta values for one ballot vector
    fn removal_oracle(answers: &[usize], truth: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let team = vote(answers, RULE).unwrap().reward(truth);
        let mut cf = Vec::new();
        let mut deltas = Vec::new();
        for i in 0..answers.len() {
            let reduced: Vec<usize> = answers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, a)| *a)
                .collect();
            let c = vote(&reduced, RULE).unwrap().reward(truth);
            cf.push(c);
            deltas.push(team - c);
        }
        (team, cf, deltas)
    }

    #[test]
    fn counterfactuals_majority_with_one_dissenter() {
        let (team, cf, deltas) = counterfactual_rewards(&[0, 0, 1], 0, RULE).unwrap();
        assert_eq!(team, 1.0);
        assert_eq!(cf, vec![0.0, 0.0, 1.0]);
        assert_eq!(deltas, vec![1.0, 1.0, 0.0]);
        assert_eq!(removal_oracle(&[0, 0, 1], 0), (team, cf, deltas));
    }

    #[test]
    fn counterfactuals_unanimous_wrong() {
        let (team, cf, deltas) = counterfactual_rewards(&[1, 1, 1], 0, RULE).unwrap();
        assert_eq!(team, 0.0);
        assert_eq!(cf, vec![0.0; 3]);
        assert_eq!(deltas, vec![0.0; 3]);
    }

    #[test]
    fn counterfactuals_minority_truth_never_positive() {
        let (team, cf, deltas) = counterfactual_rewards(&[0, 1, 1], 0, RULE).unwrap();
        assert_eq!(team, 0.0);
        assert_eq!(cf, vec![0.0, 0.0, 0.0]);
        assert_eq!(deltas, vec![0.0, 0.0, 0.0]);
        assert_eq!(removal_oracle(&[0, 1, 1], 0), (team, cf, deltas));
    }

    #[test]
    fn counterfactuals_require_two_ballots() {
        assert!(counterfactual_rewards(&[0], 0, RULE).is_err());
    }

    #[test]
    fn joint_advantages_match_group_normalization() {
        let adv = joint_advantages(&[1.0, 0.0, 0.0, 1.0], 1e-8).unwrap();
        assert!((adv[0] - 0.866025).abs() < 1e-6);
        assert_eq!(
            joint_advantages(&[1.0; 4], 1e-8).unwrap(),
            vec![0.0; 4]
        );
        let adv = joint_advantages(&[0.0, 1.0], 1e-8).unwrap();
        assert!((adv[0] + 0.707106).abs() < 1e-6);
        assert!(joint_advantages(&[1.0], 1e-8).is_err());
    }

    #[test]
    fn allocate_examples() {
        let alloc = allocate(2.0, &[1.0, 0.0, -1.0], 1e-8);
        assert!((alloc[0] - 2.0).abs() < 1e-6);
        assert_eq!(alloc[1], 0.0);
        assert_eq!(alloc[2], 0.0);

        assert_eq!(allocate(5.0, &[0.0, 0.0, 0.0], 1e-8), vec![0.0; 3]);

        let alloc = allocate(1.0, &[1.0, 1.0, 0.0], 1e-8);
        assert!((alloc[0] - 0.5).abs() < 1e-6);
        assert!((alloc[1] - 0.5).abs() < 1e-6);
        assert_eq!(alloc[2], 0.0);
    }

    #[test]
    fn direct_advantages_zero_and_symmetry() {
        let shaping = ShapingConfig::default();
        let stats = vec![
            RunningStats::new(0.99, 50).unwrap(),
            RunningStats::new(0.99, 50).unwrap(),
            RunningStats::new(0.99, 50).unwrap(),
        ];
        let deltas = vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
        ];
        let batches = direct_advantages_frozen(&deltas, &stats, &shaping).unwrap();
        assert_eq!(batches[0].advantages, vec![0.0; 4]);
        assert!((batches[1].advantages[0] - 0.866025).abs() < 1e-6);
        assert_eq!(batches[1].advantages, batches[2].advantages);
    }

    #[test]
    fn direct_advantages_update_statistics_after_standardizing() {
        let shaping = ShapingConfig::default();
        // activated stats so standardization acts; deltas shift the mean after
        let mut stats = vec![RunningStats::with_state(0.0, 1.0, 0.5, 100, 50).unwrap()];
        let deltas = vec![vec![1.0, -1.0]];
        let frozen = direct_advantages_frozen(&deltas, &stats, &shaping).unwrap();
        let updated = direct_advantages(&deltas, &mut stats, &shaping).unwrap();
        assert_eq!(frozen[0].advantages, updated[0].advantages);
        assert_eq!(stats[0].observed_count(), 102);
        assert!((stats[0].variance() - (0.5 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn counterfactuals_draw_nothing_from_the_generator() {
        let env = make_pivotal_env();
        let policies: Vec<_> = (0..3).map(|_| biased_voter(&env, 0.7).unwrap()).collect();
        let mut rng = rng::seeded(21);
        let rollouts = collect_votes(&policies, &env, 0, 8, &mut rng).unwrap();
        let before = rng.next_u64();
        for r in &rollouts {
            let _ = counterfactual_rewards(&r.answers, env.truth(0), RULE).unwrap();
        }
        // the generator was advanced exactly once, by our probe draw
        let mut replay = rng::seeded(21);
        let _ = collect_votes(&policies, &env, 0, 8, &mut replay).unwrap();
        assert_eq!(before, replay.next_u64());
    }

    #[test]
    fn pivotality_matches_correctness_flip_for_small_alphabets() {
        for answers_count in 1..=3usize {
            for truth in 0..answers_count {
                let mut tuple = vec![0usize; 3];
                loop {
                    let (team, cf, deltas) =
                        counterfactual_rewards(&tuple, truth, RULE).unwrap();
                    for i in 0..3 {
                        let pivotal = team != cf[i];
                        assert_eq!(deltas[i] != 0.0, pivotal, "tuple {tuple:?} agent {i}");
                        assert!(deltas[i] == 0.0 || deltas[i].abs() == 1.0);
                    }
                    // odometer increment
                    let mut pos = 0;
                    loop {
                        tuple[pos] += 1;
                        if tuple[pos] < answers_count {
                            break;
                        }
                        tuple[pos] = 0;
                        pos += 1;
                        if pos == 3 {
                            break;
                        }
                    }
                    if pos == 3 {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn majority_lift_matches_binomial_closed_form() {
        // three independent voters at p each: team accuracy 3p^2 - 2p^3
        let env = VotingTaskEnv::new(1, 2, 3, Some(vec![0])).unwrap();
        let p = 0.6;
        let policies: Vec<_> = (0..3).map(|_| biased_voter(&env, p).unwrap()).collect();
        let mut rng = rng::seeded(33);
        let m = 100_000;
        let mut hits = 0.0;
        for _ in 0..m / 100 {
            let rollouts = collect_votes(&policies, &env, 0, 100, &mut rng).unwrap();
            hits += rollouts.iter().map(|r| r.team_reward).sum::<f64>();
        }
        let emp = hits / m as f64;
        let exact = 3.0 * p * p - 2.0 * p * p * p;
        assert!((exact - 0.648).abs() < 1e-12);
        let se = (exact * (1.0 - exact) / m as f64).sqrt();
        assert!(
            (emp - exact).abs() <= 3.0 * se,
            "empirical {emp} vs exact {exact} (3se {})",
            3.0 * se
        );
    }

    proptest! {
        #[test]
        fn allocation_weights_bounded_and_nonnegative(
            deltas in proptest::collection::vec(-1.0f64..1.0, 2..6),
            joint in -3.0f64..3.0,
        ) {
            let eps = 1e-8;
            let alloc = allocate(joint, &deltas, eps);
            let mut weight_sum = 0.0;
            for (a, d) in alloc.iter().zip(&deltas) {
                if *d <= 0.0 {
                    prop_assert_eq!(*a, 0.0);
                }
                if joint.abs() > 0.0 {
                    let w = a / joint;
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(&w));
                    weight_sum += w;
                }
            }
            prop_assert!(weight_sum <= 1.0 + 1e-9);
        }

        #[test]
        fn permutation_equivariance(
            answers in proptest::collection::vec(0usize..4, 3..5),
            truth in 0usize..4,
            rotation in 1usize..4,
        ) {
            let k = answers.len();
            let rot = rotation % k;
            let (_, cf, deltas) = counterfactual_rewards(&answers, truth, RULE).unwrap();
            let mut permuted = answers.clone();
            permuted.rotate_left(rot);
            let (_, cf_p, deltas_p) = counterfactual_rewards(&permuted, truth, RULE).unwrap();
            for i in 0..k {
                prop_assert_eq!(cf_p[i], cf[(i + rot) % k]);
                prop_assert_eq!(deltas_p[i], deltas[(i + rot) % k]);
            }
            let alloc = allocate(1.5, &deltas, 1e-8);
            let alloc_p = allocate(1.5, &deltas_p, 1e-8);
            for i in 0..k {
                prop_assert!((alloc_p[i] - alloc[(i + rot) % k]).abs() < 1e-12);
            }
        }
    }
}
