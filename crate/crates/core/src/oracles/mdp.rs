//! Exact tabular MDP computations and the block-update gain bound.
//!
//! Freezing all agents but one induces a stationary MDP for the remaining
//! agent. On small instances everything is solved exactly by linear algebra:
//! state values, advantages, discounted visitation, the surrogate objective,
//! and hence both sides of the gain bound
//! `J(new) - J(old) >= delta_L - C(gamma) * eps * sqrt(delta_kl)` with
//! `C(gamma) = 2 * gamma * sqrt(2) / (1 - gamma)^2`.

use rand::Rng;

use crate::env::SequentialTaskEnv;
use crate::error::{Error, Result};
use crate::oracles::kl::kl_divergence;
use crate::policy::LogLinearPolicy;

const MAX_EXACT_STATE_ACTIONS: usize = 64;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Finite MDP with rewards in [0, 1].
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    /// `transition[s * actions * states + a * states + s']`
    transition: Vec<f64>,
    /// `reward[s * actions + a]`
    reward: Vec<f64>,
    pub gamma: f64,
    start: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        states: usize,
        actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        start: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::InvalidInput(
                "MDP needs positive state and action counts".to_string(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!(
                "discount must lie in (0, 1), got {gamma}"
            )));
        }
        if transition.len() != states * actions * states {
            return Err(Error::InvalidInput("transition table size mismatch".to_string()));
        }
        if reward.len() != states * actions {
            return Err(Error::InvalidInput("reward table size mismatch".to_string()));
        }
        if start.len() != states {
            return Err(Error::InvalidInput("start distribution size mismatch".to_string()));
        }
        if reward.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInput(
                "rewards must lie in [0, 1]".to_string(),
            ));
        }
        for s in 0..states {
            for a in 0..actions {
                let row = &transition[(s * actions + a) * states..(s * actions + a + 1) * states];
                let total: f64 = row.iter().sum();
                if row.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "transition row (s={s}, a={a}) sums to {total}"
                    )));
                }
            }
        }
        let start_total: f64 = start.iter().sum();
        if start.iter().any(|p| *p < 0.0) || (start_total - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidInput(
                "start distribution must be a probability vector".to_string(),
            ));
        }
        Ok(Self {
            states,
            actions,
            transition,
            reward,
            gamma,
            start,
        })
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.actions + a) * self.states + next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions + a]
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    /// Random MDP with normalized-exponential transition rows, uniform [0, 1]
    /// rewards, and a random start distribution.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, gamma: f64, rng: &mut R) -> Self {
        let mut transition = Vec::with_capacity(states * actions * states);
        for _ in 0..states * actions {
            let mut row: Vec<f64> = (0..states)
                .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            transition.extend(row);
        }
        let reward: Vec<f64> = (0..states * actions).map(|_| rng.random()).collect();
        let mut start: Vec<f64> = (0..states)
            .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
            .collect();
        let total: f64 = start.iter().sum();
        start.iter_mut().for_each(|v| *v /= total);
        Self::new(states, actions, transition, reward, gamma, start)
            .expect("random construction is valid")
    }
}

/// Row-stochastic action distribution per state.
#[derive(Debug, Clone)]
pub struct MdpPolicy {
    pub states: usize,
    pub actions: usize,
    probs: Vec<f64>,
}

impl MdpPolicy {
    pub fn new(states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != states * actions {
            return Err(Error::InvalidInput("policy table size mismatch".to_string()));
        }
        for s in 0..states {
            let row = &probs[s * actions..(s + 1) * actions];
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "policy row {s} sums to {total}"
                )));
            }
        }
        Ok(Self {
            states,
            actions,
            probs,
        })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            probs: vec![1.0 / actions as f64; states * actions],
        }
    }

    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(states * actions);
        for _ in 0..states {
            let mut row: Vec<f64> = (0..actions)
                .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            probs.extend(row);
        }
        Self {
            states,
            actions,
            probs,
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    /// Multiplicative perturbation of each row, renormalized. `scale` bounds
    /// the log-factor magnitude, so small scales produce KL-small shifts.
    pub fn perturbed<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(self.probs.len());
        for s in 0..self.states {
            let mut row: Vec<f64> = self
                .row(s)
                .iter()
                .map(|p| p * (scale * (2.0 * rng.random::<f64>() - 1.0)).exp())
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            probs.extend(row);
        }
        Self {
            states: self.states,
            actions: self.actions,
            probs,
        }
    }
}

/// Gaussian elimination with partial pivoting; sizes here are at most 64.
fn solve_linear(n: usize, a: &mut [f64], b: &mut [f64]) -> Vec<f64> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        debug_assert!(diag.abs() > 1e-300, "I - gamma*P is nonsingular");
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x
}

fn policy_transition(mdp: &TabularMdp, policy: &MdpPolicy) -> Vec<f64> {
    let n = mdp.states;
    let mut p = vec![0.0; n * n];
    for s in 0..n {
        let row = policy.row(s);
        for (a, pa) in row.iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            for next in 0..n {
                p[s * n + next] += pa * mdp.transition(s, a, next);
            }
        }
    }
    p
}

/// State values of a policy: `v = (I - gamma * P_pi)^{-1} r_pi`.
pub fn policy_values(mdp: &TabularMdp, policy: &MdpPolicy) -> Vec<f64> {
    let n = mdp.states;
    let p = policy_transition(mdp, policy);
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        for next in 0..n {
            a[s * n + next] = ((s == next) as u8 as f64) - mdp.gamma * p[s * n + next];
        }
        b[s] = policy
            .row(s)
            .iter()
            .enumerate()
            .map(|(act, pa)| pa * mdp.reward(s, act))
            .sum();
    }
    solve_linear(n, &mut a, &mut b)
}

/// Action advantages `q(s, a) - v(s)` of a policy.
pub fn policy_advantages(mdp: &TabularMdp, policy: &MdpPolicy) -> Vec<f64> {
    let values = policy_values(mdp, policy);
    let mut adv = vec![0.0; mdp.states * mdp.actions];
    for s in 0..mdp.states {
        for a in 0..mdp.actions {
            let mut q = mdp.reward(s, a);
            for next in 0..mdp.states {
                q += mdp.gamma * mdp.transition(s, a, next) * values[next];
            }
            adv[s * mdp.actions + a] = q - values[s];
        }
    }
    adv
}

/// Start-weighted objective `J(pi)`.
pub fn objective(mdp: &TabularMdp, policy: &MdpPolicy) -> f64 {
    policy_values(mdp, policy)
        .iter()
        .zip(mdp.start())
        .map(|(v, p)| v * p)
        .sum()
}

/// Unnormalized discounted state visitation of a policy:
/// `d = (I - gamma * P_pi^T)^{-1} start`, i.e. `sum_t gamma^t P(s_t = s)`.
pub fn discounted_visitation(mdp: &TabularMdp, policy: &MdpPolicy) -> Vec<f64> {
    let n = mdp.states;
    let p = policy_transition(mdp, policy);
    let mut a = vec![0.0; n * n];
    let mut b = mdp.start().to_vec();
    for s in 0..n {
        for next in 0..n {
            // transpose of P_pi
            a[s * n + next] = ((s == next) as u8 as f64) - mdp.gamma * p[next * n + s];
        }
    }
    solve_linear(n, &mut a, &mut b)
}

/// Surrogate improvement `L_old(new) - L_old(old)`: the old policy's
/// advantages re-weighted by the candidate policy under the old visitation.
pub fn surrogate_gain(mdp: &TabularMdp, old: &MdpPolicy, new: &MdpPolicy) -> f64 {
    let adv = policy_advantages(mdp, old);
    let visitation = discounted_visitation(mdp, old);
    let mut gain = 0.0;
    for s in 0..mdp.states {
        let mut expected_new = 0.0;
        let mut expected_old = 0.0;
        for a in 0..mdp.actions {
            expected_new += new.row(s)[a] * adv[s * mdp.actions + a];
            expected_old += old.row(s)[a] * adv[s * mdp.actions + a];
        }
        gain += visitation[s] * (expected_new - expected_old);
    }
    gain
}

/// Maximum over states of `KL(old(.|s) || new(.|s))`.
pub fn max_state_kl(old: &MdpPolicy, new: &MdpPolicy) -> f64 {
    (0..old.states)
        .map(|s| kl_divergence(old.row(s), new.row(s)))
        .fold(0.0, f64::max)
}

/// `C(gamma) = 2 * gamma * sqrt(2) / (1 - gamma)^2`.
pub fn trust_region_constant(gamma: f64) -> f64 {
    2.0 * gamma * 2.0f64.sqrt() / ((1.0 - gamma) * (1.0 - gamma))
}

#[derive(Debug, Clone, Copy)]
pub struct BlockGainReport {
    /// `J(new) - J(old)`, exactly.
    pub lhs: f64,
    /// `delta_L - C(gamma) * eps * sqrt(delta_kl)`.
    pub rhs: f64,
    pub delta_l: f64,
    /// `max |A_old(s, a)|`.
    pub epsilon: f64,
    pub max_kl: f64,
    pub holds: bool,
}

/// Verifies the gain bound for one block update under a stated KL budget.
pub fn block_gain_check(
    mdp: &TabularMdp,
    old: &MdpPolicy,
    new: &MdpPolicy,
    delta_kl: f64,
) -> Result<BlockGainReport> {
    if mdp.states * mdp.actions > MAX_EXACT_STATE_ACTIONS {
        return Err(Error::TooLarge(format!(
            "{}x{} exceeds the exact-solve limit of {MAX_EXACT_STATE_ACTIONS} state-actions",
            mdp.states, mdp.actions
        )));
    }
    if old.states != mdp.states || new.states != mdp.states || old.actions != mdp.actions {
        return Err(Error::InvalidInput(
            "policy shapes must match the MDP".to_string(),
        ));
    }
    if delta_kl < 0.0 {
        return Err(Error::InvalidInput("KL budget must be non-negative".to_string()));
    }
    let max_kl = max_state_kl(old, new);
    if max_kl > delta_kl + 1e-12 {
        return Err(Error::Precondition(format!(
            "max-state KL {max_kl} exceeds the stated budget {delta_kl}"
        )));
    }
    let adv = policy_advantages(mdp, old);
    let epsilon = adv.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let delta_l = surrogate_gain(mdp, old, new);
    let lhs = objective(mdp, new) - objective(mdp, old);
    let rhs = delta_l - trust_region_constant(mdp.gamma) * epsilon * delta_kl.sqrt();
    Ok(BlockGainReport {
        lhs,
        rhs,
        delta_l,
        epsilon,
        max_kl,
        holds: lhs >= rhs - 1e-9,
    })
}

/// The stationary MDP induced for the thinker when the solver is frozen:
/// states are prompts, actions are messages, the reward is the solver's
/// probability of answering correctly given the message, and prompts renew
/// uniformly.
pub fn induced_mdp_for_thinker(
    env: &SequentialTaskEnv,
    solver: &LogLinearPolicy,
    gamma: f64,
) -> Result<TabularMdp> {
    let states = env.prompts;
    let actions = env.messages;
    let mut reward = Vec::with_capacity(states * actions);
    for prompt in 0..states {
        for message in 0..actions {
            let probs = solver.probs(env.solver_context(prompt, message))?;
            let mut expected = 0.0;
            for (answer, p) in probs.iter().enumerate() {
                expected += p * env.reward(prompt, answer);
            }
            reward.push(expected);
        }
    }
    let uniform = 1.0 / states as f64;
    let transition = vec![uniform; states * actions * states];
    let start = vec![uniform; states];
    TabularMdp::new(states, actions, transition, reward, gamma, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_hint_env;
    use crate::rng;

    #[test]
    fn constant_reproduces_closed_form() {
        let c = trust_region_constant(0.9);
        assert!((c - 180.0 * 2.0f64.sqrt()).abs() < 1e-9);
        assert!((c - 254.558441227).abs() < 1e-6);
        let c = trust_region_constant(0.5);
        assert!((c - 4.0 * 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn values_match_hand_solved_chain() {
        // two states, one action, reward 1 only in state 0, stay put:
        // v0 = 1 / (1 - gamma), v1 = 0
        let gamma = 0.5;
        let transition = vec![
            1.0, 0.0, // s0 -> s0
            0.0, 1.0, // s1 -> s1
        ];
        let mdp = TabularMdp::new(2, 1, transition, vec![1.0, 0.0], gamma, vec![0.5, 0.5]).unwrap();
        let policy = MdpPolicy::uniform(2, 1);
        let v = policy_values(&mdp, &policy);
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!(v[1].abs() < 1e-12);
        assert!((objective(&mdp, &policy) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn performance_difference_identity() {
        // J(new) - J(old) equals the new policy's advantage against old,
        // weighted by the new policy's own visitation
        let mut rng = rng::seeded(8);
        for _ in 0..20 {
            let mdp = TabularMdp::random(4, 3, 0.9, &mut rng);
            let old = MdpPolicy::random(4, 3, &mut rng);
            let new = MdpPolicy::random(4, 3, &mut rng);
            let adv_old = policy_advantages(&mdp, &old);
            let visit_new = discounted_visitation(&mdp, &new);
            let mut expected_gain = 0.0;
            for s in 0..4 {
                for a in 0..3 {
                    expected_gain += visit_new[s] * new.row(s)[a] * adv_old[s * 3 + a];
                }
            }
            let direct = objective(&mdp, &new) - objective(&mdp, &old);
            assert!(
                (direct - expected_gain).abs() < 1e-9,
                "{direct} vs {expected_gain}"
            );
        }
    }

    #[test]
    fn identical_policies_give_zero_on_both_sides() {
        let mut rng = rng::seeded(12);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng);
        let policy = MdpPolicy::random(3, 2, &mut rng);
        let report = block_gain_check(&mdp, &policy, &policy, 0.0).unwrap();
        assert!(report.lhs.abs() < 1e-12);
        assert!(report.delta_l.abs() < 1e-12);
        assert!(report.rhs.abs() < 1e-12);
        assert!(report.holds);
    }

    #[test]
    fn kl_precondition_enforced() {
        let mut rng = rng::seeded(13);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng);
        let old = MdpPolicy::random(3, 2, &mut rng);
        let new = old.perturbed(0.5, &mut rng);
        let kl = max_state_kl(&old, &new);
        assert!(block_gain_check(&mdp, &old, &new, kl / 2.0).is_err());
        assert!(block_gain_check(&mdp, &old, &new, kl).is_ok());
    }

    #[test]
    fn random_battery_never_violates_the_bound() {
        let mut rng = rng::seeded(14);
        for i in 0..100 {
            let states = 2 + (i % 7);
            let actions = 2 + (i % 5);
            let gamma = if i % 2 == 0 { 0.5 } else { 0.9 };
            let mdp = TabularMdp::random(states, actions, gamma, &mut rng);
            let old = MdpPolicy::random(states, actions, &mut rng);
            let scale = 0.01 + 0.5 * rng.random::<f64>();
            let new = old.perturbed(scale, &mut rng);
            let kl = max_state_kl(&old, &new);
            let report = block_gain_check(&mdp, &old, &new, kl).unwrap();
            assert!(report.holds, "violation: {report:?}");
        }
    }

    #[test]
    fn induced_mdp_rows_are_stochastic() {
        let env = make_hint_env();
        let mut rng = rng::seeded(16);
        let solver_states = env.solver_context_count();
        let mut params = Vec::new();
        for _ in 0..solver_states * env.answers {
            params.push(2.0 * rng.random::<f64>() - 1.0);
        }
        let solver = LogLinearPolicy::from_params(solver_states, env.answers, params).unwrap();
        let mdp = induced_mdp_for_thinker(&env, &solver, 0.9).unwrap();
        assert_eq!(mdp.states, env.prompts);
        assert_eq!(mdp.actions, env.messages);
        for s in 0..mdp.states {
            for a in 0..mdp.actions {
                let total: f64 = (0..mdp.states).map(|n| mdp.transition(s, a, n)).sum();
                assert!((total - 1.0).abs() <= 1e-12);
                assert!((0.0..=1.0).contains(&mdp.reward(s, a)));
            }
        }
    }

    #[test]
    fn oversized_mdp_refused() {
        let mut rng = rng::seeded(17);
        let mdp = TabularMdp::random(9, 8, 0.9, &mut rng);
        let policy = MdpPolicy::uniform(9, 8);
        assert!(matches!(
            block_gain_check(&mdp, &policy, &policy, 0.0),
            Err(Error::TooLarge(_))
        ));
    }
}
