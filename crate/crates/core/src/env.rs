//! Synthetic tasks for both collaboration topologies.
//!
//! Everything is discrete and small (prompts <= 32, messages <= 8,
//! answers <= 8, voters <= 5) so the verification oracles can enumerate joint
//! outcomes exactly. Truth tables and context maps are pure data; rewards are
//! exact-match 0/1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::LogLinearPolicy;

pub const MAX_PROMPTS: usize = 32;
pub const MAX_MESSAGES: usize = 8;
pub const MAX_ANSWERS: usize = 8;
pub const MAX_VOTERS: usize = 5;

fn balanced_truth(prompts: usize, answers: usize) -> Vec<usize> {
    (0..prompts).map(|p| p % answers).collect()
}

fn validate_truth(truth: &[usize], prompts: usize, answers: usize) -> Result<()> {
    if truth.len() != prompts {
        return Err(Error::InvalidInput(format!(
            "truth table must have one entry per prompt ({prompts}), got {}",
            truth.len()
        )));
    }
    if let Some(bad) = truth.iter().find(|t| **t >= answers) {
        return Err(Error::InvalidInput(format!(
            "truth entry {bad} out of range (answers={answers})"
        )));
    }
    Ok(())
}

/// Two-agent handoff task: the first agent turns a prompt into a message, the
/// second answers from a context derived from (prompt, message).
///
/// The context map controls how much of the message the solver can read:
///
/// * `hint_channel` routes the first `round(h * messages)` message symbols to
///   their own solver contexts and garbles the rest into the no-message
///   context, so `h` is the fraction of messages that reach the solver.
///   The solver never sees the prompt directly, which makes the truth
///   recoverable only through the message channel.
/// * `message_ignoring` maps every message of a prompt (and the no-message
///   case) to one per-prompt context, so the solver sees the prompt and the
///   message carries no usable information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialTaskEnv {
    pub prompts: usize,
    pub messages: usize,
    pub answers: usize,
    pub truth: Vec<usize>,
    pub hint_informativeness: f64,
    solver_context: Vec<usize>,
    solver_solo_context: Vec<usize>,
    solver_context_count: usize,
}

impl SequentialTaskEnv {
    fn validate_sizes(prompts: usize, messages: usize, answers: usize) -> Result<()> {
        if prompts == 0 || prompts > MAX_PROMPTS {
            return Err(Error::InvalidInput(format!(
                "prompt count must be in 1..={MAX_PROMPTS}, got {prompts}"
            )));
        }
        if messages == 0 || messages > MAX_MESSAGES {
            return Err(Error::InvalidInput(format!(
                "message alphabet must be in 1..={MAX_MESSAGES}, got {messages}"
            )));
        }
        if answers == 0 || answers > MAX_ANSWERS {
            return Err(Error::InvalidInput(format!(
                "answer count must be in 1..={MAX_ANSWERS}, got {answers}"
            )));
        }
        Ok(())
    }

    /// Hint-channel task. The solver can only read the informative fraction
    /// of the message alphabet; at `hint_informativeness = 0` every message
    /// collapses into the no-message context and reading messages is exactly
    /// as good as ignoring them.
    pub fn hint_channel(
        prompts: usize,
        messages: usize,
        answers: usize,
        hint_informativeness: f64,
        truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::validate_sizes(prompts, messages, answers)?;
        if !(0.0..=1.0).contains(&hint_informativeness) {
            return Err(Error::InvalidInput(format!(
                "hint_informativeness must lie in [0, 1], got {hint_informativeness}"
            )));
        }
        let truth = match truth {
            Some(t) => {
                validate_truth(&t, prompts, answers)?;
                t
            }
            None => balanced_truth(prompts, answers),
        };
        let informative = (hint_informativeness * messages as f64).round() as usize;
        let garbled = messages; // shared context for unreadable/no message
        let mut solver_context = Vec::with_capacity(prompts * messages);
        for _prompt in 0..prompts {
            for message in 0..messages {
                solver_context.push(if message < informative { message } else { garbled });
            }
        }
        Ok(Self {
            prompts,
            messages,
            answers,
            truth,
            hint_informativeness,
            solver_context,
            solver_solo_context: vec![garbled; prompts],
            solver_context_count: messages + 1,
        })
    }

    /// Task in which the solver sees the prompt but not the message. The
    /// optimal message-reading solver coincides with the optimal
    /// message-ignoring one, so the first agent's marginal contribution
    /// degenerates to zero.
    pub fn message_ignoring(
        prompts: usize,
        messages: usize,
        answers: usize,
        truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::validate_sizes(prompts, messages, answers)?;
        let truth = match truth {
            Some(t) => {
                validate_truth(&t, prompts, answers)?;
                t
            }
            None => balanced_truth(prompts, answers),
        };
        let mut solver_context = Vec::with_capacity(prompts * messages);
        for prompt in 0..prompts {
            for _message in 0..messages {
                solver_context.push(prompt);
            }
        }
        Ok(Self {
            prompts,
            messages,
            answers,
            truth,
            hint_informativeness: 0.0,
            solver_context,
            solver_solo_context: (0..prompts).collect(),
            solver_context_count: prompts,
        })
    }

    pub fn truth(&self, prompt: usize) -> usize {
        self.truth[prompt]
    }

    /// Solver context for a (prompt, message) pair.
    pub fn solver_context(&self, prompt: usize, message: usize) -> usize {
        self.solver_context[prompt * self.messages + message]
    }

    /// Solver context when answering without a message.
    pub fn solver_solo_context(&self, prompt: usize) -> usize {
        self.solver_solo_context[prompt]
    }

    pub fn solver_context_count(&self) -> usize {
        self.solver_context_count
    }

    /// Exact-match reward.
    pub fn reward(&self, prompt: usize, answer: usize) -> f64 {
        if answer == self.truth[prompt] {
            1.0
        } else {
            0.0
        }
    }
}

/// K-agent voting task: agents answer the prompt independently and a
/// deterministic plurality rule aggregates. An abstaining (tied) decision
/// always scores zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingTaskEnv {
    pub prompts: usize,
    pub answers: usize,
    pub voters: usize,
    pub truth: Vec<usize>,
}

impl VotingTaskEnv {
    pub fn new(
        prompts: usize,
        answers: usize,
        voters: usize,
        truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        if prompts == 0 || prompts > MAX_PROMPTS {
            return Err(Error::InvalidInput(format!(
                "prompt count must be in 1..={MAX_PROMPTS}, got {prompts}"
            )));
        }
        if answers == 0 || answers > MAX_ANSWERS {
            return Err(Error::InvalidInput(format!(
                "answer count must be in 1..={MAX_ANSWERS}, got {answers}"
            )));
        }
        if voters == 0 || voters > MAX_VOTERS {
            return Err(Error::InvalidInput(format!(
                "voter count must be in 1..={MAX_VOTERS}, got {voters}"
            )));
        }
        let truth = match truth {
            Some(t) => {
                validate_truth(&t, prompts, answers)?;
                t
            }
            None => balanced_truth(prompts, answers),
        };
        Ok(Self {
            prompts,
            answers,
            voters,
            truth,
        })
    }

    pub fn truth(&self, prompt: usize) -> usize {
        self.truth[prompt]
    }
}

/// Free-riding construction: the solver sees the prompt directly, so the
/// thinker's message can never change the outcome and every marginal
/// contribution is structurally zero.
pub fn make_freerider_env() -> SequentialTaskEnv {
    SequentialTaskEnv::message_ignoring(4, 4, 2, None).expect("static sizes are valid")
}

/// Hint-dependent construction: the truth is recoverable only through the
/// message channel, so collaboration is required to beat solo guessing.
pub fn make_hint_env() -> SequentialTaskEnv {
    SequentialTaskEnv::hint_channel(4, 4, 2, 1.0, None).expect("static sizes are valid")
}

/// Three-voter binary task where single votes are frequently decisive.
pub fn make_pivotal_env() -> VotingTaskEnv {
    VotingTaskEnv::new(4, 2, 3, None).expect("static sizes are valid")
}

/// Logit bonus that gives the favored action probability `accuracy` against
/// `actions - 1` uniform alternatives.
pub fn accuracy_logit(accuracy: f64, actions: usize) -> Result<f64> {
    if actions < 2 {
        return Err(Error::InvalidInput(
            "accuracy targeting needs at least 2 actions".to_string(),
        ));
    }
    if !(accuracy > 0.0 && accuracy < 1.0) {
        return Err(Error::InvalidInput(format!(
            "accuracy must lie strictly in (0, 1), got {accuracy}"
        )));
    }
    Ok((accuracy * (actions as f64 - 1.0) / (1.0 - accuracy)).ln())
}

/// Large enough that softmax underflows every alternative to exactly zero.
pub const DETERMINISTIC_LOGIT: f64 = 1000.0;

/// Solver that answers the truth of each prompt with probability `accuracy`
/// in every context it can be queried from. Requires that each solver
/// context determines the prompt's truth unambiguously (true for
/// `message_ignoring` tasks).
pub fn strong_solver(env: &SequentialTaskEnv, accuracy: Option<f64>) -> Result<LogLinearPolicy> {
    let bonus = match accuracy {
        Some(a) => accuracy_logit(a, env.answers)?,
        None => DETERMINISTIC_LOGIT,
    };
    let mut assigned: Vec<Option<usize>> = vec![None; env.solver_context_count()];
    let mut policy = LogLinearPolicy::uniform(env.solver_context_count(), env.answers)?;
    for prompt in 0..env.prompts {
        let truth = env.truth(prompt);
        let mut contexts: Vec<usize> = (0..env.messages)
            .map(|m| env.solver_context(prompt, m))
            .collect();
        contexts.push(env.solver_solo_context(prompt));
        for ctx in contexts {
            match assigned[ctx] {
                Some(t) if t != truth => {
                    return Err(Error::InvalidInput(format!(
                        "solver context {ctx} is shared by prompts with different truths"
                    )));
                }
                Some(_) => {}
                None => {
                    assigned[ctx] = Some(truth);
                    policy.set_logit(ctx, truth, bonus)?;
                }
            }
        }
    }
    Ok(policy)
}

/// Voter that answers each prompt's truth with probability `accuracy`.
pub fn biased_voter(env: &VotingTaskEnv, accuracy: f64) -> Result<LogLinearPolicy> {
    let bonus = accuracy_logit(accuracy, env.answers)?;
    let mut policy = LogLinearPolicy::uniform(env.prompts, env.answers)?;
    for prompt in 0..env.prompts {
        policy.set_logit(prompt, env.truth(prompt), bonus)?;
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hint_channel_context_map() {
        let env = SequentialTaskEnv::hint_channel(4, 4, 2, 1.0, None).unwrap();
        assert_eq!(env.solver_context_count(), 5);
        for p in 0..4 {
            for m in 0..4 {
                assert_eq!(env.solver_context(p, m), m);
            }
            assert_eq!(env.solver_solo_context(p), 4);
        }
    }

    #[test]
    fn zero_informativeness_collapses_to_solo_context() {
        let env = SequentialTaskEnv::hint_channel(4, 4, 2, 0.0, None).unwrap();
        for p in 0..4 {
            for m in 0..4 {
                assert_eq!(env.solver_context(p, m), env.solver_solo_context(p));
            }
        }
    }

    #[test]
    fn message_ignoring_maps_all_messages_to_prompt() {
        let env = SequentialTaskEnv::message_ignoring(3, 4, 2, None).unwrap();
        for p in 0..3 {
            for m in 0..4 {
                assert_eq!(env.solver_context(p, m), p);
            }
            assert_eq!(env.solver_solo_context(p), p);
        }
    }

    #[test]
    fn reward_is_exact_match() {
        let env = SequentialTaskEnv::hint_channel(4, 4, 2, 1.0, None).unwrap();
        assert_eq!(env.reward(1, env.truth(1)), 1.0);
        assert_eq!(env.reward(1, 1 - env.truth(1)), 0.0);
    }

    #[test]
    fn size_bounds_enforced() {
        assert!(SequentialTaskEnv::hint_channel(33, 4, 2, 1.0, None).is_err());
        assert!(SequentialTaskEnv::hint_channel(4, 9, 2, 1.0, None).is_err());
        assert!(VotingTaskEnv::new(4, 2, 6, None).is_err());
        assert!(VotingTaskEnv::new(4, 9, 3, None).is_err());
    }

    #[test]
    fn truth_table_validated() {
        assert!(SequentialTaskEnv::hint_channel(2, 2, 2, 1.0, Some(vec![0, 2])).is_err());
        assert!(VotingTaskEnv::new(2, 2, 3, Some(vec![0])).is_err());
    }

    #[test]
    fn accuracy_logit_hits_target() {
        let env = VotingTaskEnv::new(1, 2, 3, None).unwrap();
        let voter = biased_voter(&env, 0.9).unwrap();
        let probs = voter.probs(0).unwrap();
        assert!((probs[env.truth(0)] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn deterministic_solver_is_exact() {
        let env = make_freerider_env();
        let solver = strong_solver(&env, None).unwrap();
        for p in 0..env.prompts {
            let probs = solver.probs(env.solver_solo_context(p)).unwrap();
            assert_eq!(probs[env.truth(p)], 1.0);
        }
    }

    #[test]
    fn strong_solver_rejects_ambiguous_contexts() {
        // hint-channel at full informativeness shares message contexts across
        // prompts with different truths
        let env = make_hint_env();
        assert!(strong_solver(&env, Some(0.9)).is_err());
    }
}
