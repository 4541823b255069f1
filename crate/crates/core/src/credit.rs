//! Topology-agnostic credit machinery: marginal contributions, running reward
//! statistics, bounded reward shaping, within-prompt group-relative
//! advantages, and the clipped surrogate term.
//!
//! Rewards live on an O(1) scale (the built-in tasks use 0/1 correctness), so
//! a small epsilon guard keeps every division well-defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest f64 strictly below 1. Used to keep saturating transforms inside
/// their open interval.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Credit assigned to one agent on one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalContribution {
    pub agent_id: usize,
    pub rollout_id: usize,
    /// Team reward minus the counterfactual reward of this (agent, rollout).
    pub delta: f64,
}

/// Difference between the realized team reward and the reward with the
/// agent's contribution removed. Positive only when the agent improved the
/// outcome; exactly zero when it was redundant.
pub fn marginal_contribution(team_reward: f64, counterfactual_reward: f64) -> Result<f64> {
    if !team_reward.is_finite() || !counterfactual_reward.is_finite() {
        return Err(Error::InvalidInput(format!(
            "rewards must be finite (team={team_reward}, counterfactual={counterfactual_reward})"
        )));
    }
    Ok(team_reward - counterfactual_reward)
}

/// Exponential moving averages of a reward stream's mean and variance, with a
/// minimum-sample activation gate.
///
/// Standardization is the identity until `min_samples` values have been
/// observed, so early batches are not amplified by unconverged statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunningStats {
    mean: f64,
    variance: f64,
    decay: f64,
    observed_count: u64,
    min_samples: u64,
}

impl RunningStats {
    /// Fresh statistics at (mean 0, variance 0).
    pub fn new(decay: f64, min_samples: u64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidInput(format!(
                "EMA decay must lie in (0, 1), got {decay}"
            )));
        }
        if min_samples == 0 {
            return Err(Error::InvalidInput(
                "min_samples must be positive".to_string(),
            ));
        }
        Ok(Self {
            mean: 0.0,
            variance: 0.0,
            decay,
            observed_count: 0,
            min_samples,
        })
    }

    /// Statistics with explicit state, for resuming or for constructing test
    /// fixtures.
    pub fn with_state(
        mean: f64,
        variance: f64,
        decay: f64,
        observed_count: u64,
        min_samples: u64,
    ) -> Result<Self> {
        let mut stats = Self::new(decay, min_samples)?;
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidInput(format!(
                "mean must be finite and variance non-negative (mean={mean}, variance={variance})"
            )));
        }
        stats.mean = mean;
        stats.variance = variance;
        stats.observed_count = observed_count;
        Ok(stats)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn observed_count(&self) -> u64 {
        self.observed_count
    }

    pub fn min_samples(&self) -> u64 {
        self.min_samples
    }

    /// Whether enough samples have been observed for standardization to act.
    pub fn is_active(&self) -> bool {
        self.observed_count >= self.min_samples
    }

    /// Folds one batch into the moving averages:
    /// `mean' = d*mean + (1-d)*batch_mean`, and likewise for the variance.
    ///
    /// The batch variance uses the population convention (divide by n) so a
    /// single-value batch is well-defined.
    pub fn update(&mut self, batch_values: &[f64]) -> Result<()> {
        if batch_values.is_empty() {
            return Err(Error::InvalidInput(
                "statistics update requires a non-empty batch".to_string(),
            ));
        }
        if batch_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "statistics update requires finite batch values".to_string(),
            ));
        }
        let n = batch_values.len() as f64;
        let batch_mean = batch_values.iter().sum::<f64>() / n;
        let batch_var = batch_values
            .iter()
            .map(|v| (v - batch_mean).powi(2))
            .sum::<f64>()
            / n;
        self.mean = self.decay * self.mean + (1.0 - self.decay) * batch_mean;
        self.variance = (self.decay * self.variance + (1.0 - self.decay) * batch_var).max(0.0);
        self.observed_count += batch_values.len() as u64;
        Ok(())
    }

    /// Standardized score `(delta - mean) / (std + epsilon)`, or `delta`
    /// unchanged while the statistics are below their activation threshold.
    pub fn standardize(&self, delta: f64, epsilon: f64) -> f64 {
        debug_assert!(epsilon > 0.0);
        if !self.is_active() {
            return delta;
        }
        (delta - self.mean) / (self.std() + epsilon)
    }
}

/// Shaping hyperparameters: sensitivity `alpha` and the numerical guard
/// `epsilon`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShapingConfig {
    pub alpha: f64,
    pub epsilon: f64,
}

impl ShapingConfig {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be strictly positive, got {alpha}"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epsilon must be strictly positive, got {epsilon}"
            )));
        }
        Ok(Self { alpha, epsilon })
    }
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 1e-8,
        }
    }
}

/// Bounded shaped reward `tanh(alpha * z)`: odd, monotone increasing, and
/// strictly inside (-1, 1) for every finite input (saturation is clamped one
/// ulp short of the bound).
pub fn shape(z: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0);
    (alpha * z).tanh().clamp(-ONE_MINUS_ULP, ONE_MINUS_ULP)
}

/// Within-prompt group-relative advantages: subtract the group mean and
/// divide by the sample (n-1) standard deviation plus `epsilon`.
///
/// A group with all rewards equal carries no preference information and maps
/// to exact zeros rather than epsilon-divided residue.
pub fn group_advantage(shaped_rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if shaped_rewards.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "group-relative normalization needs at least 2 rewards, got {}",
            shaped_rewards.len()
        )));
    }
    debug_assert!(epsilon > 0.0);
    let first = shaped_rewards[0];
    if shaped_rewards.iter().all(|r| *r == first) {
        return Ok(vec![0.0; shaped_rewards.len()]);
    }
    let n = shaped_rewards.len() as f64;
    let mean = shaped_rewards.iter().sum::<f64>() / n;
    let sample_var = shaped_rewards
        .iter()
        .map(|r| (r - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let std = sample_var.sqrt();
    Ok(shaped_rewards
        .iter()
        .map(|r| (r - mean) / (std + epsilon))
        .collect())
}

/// The N shaped rewards of one prompt together with their normalized
/// advantages.
#[derive(Debug, Clone)]
pub struct AdvantageBatch {
    pub shaped_rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub epsilon: f64,
}

impl AdvantageBatch {
    pub fn from_shaped(shaped_rewards: Vec<f64>, epsilon: f64) -> Result<Self> {
        let advantages = group_advantage(&shaped_rewards, epsilon)?;
        Ok(Self {
            shaped_rewards,
            advantages,
            epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

/// Clipped surrogate loss term
/// `-min(ratio * advantage, clamp(ratio, 1-eps, 1+eps) * advantage)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> Result<f64> {
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "importance ratio must be positive and finite, got {ratio}"
        )));
    }
    debug_assert!(clip_eps > 0.0 && clip_eps < 1.0);
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    Ok(-f64::min(ratio * advantage, clipped * advantage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent tanh route for frozen expected values: exp-based identity.
    fn tanh_oracle(x: f64) -> f64 {
        let e = (2.0 * x).exp();
        (e - 1.0) / (e + 1.0)
    }

    // Direct recomputation oracle for group advantages (mean + Bessel std).
    fn group_advantage_oracle(rewards: &[f64], epsilon: f64) -> Vec<f64> {
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        rewards
            .iter()
            .map(|r| (r - mean) / (var.sqrt() + epsilon))
            .collect()
    }

    #[test]
    fn marginal_contribution_pivotal_redundant_harmful() {
        assert_eq!(marginal_contribution(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(marginal_contribution(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(marginal_contribution(0.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn marginal_contribution_rejects_non_finite() {
        assert!(marginal_contribution(f64::NAN, 0.0).is_err());
        assert!(marginal_contribution(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn ema_update_direct_arithmetic() {
        let mut stats = RunningStats::new(0.99, 50).unwrap();
        stats.update(&[0.5, 0.5]).unwrap();
        assert!((stats.mean() - 0.005).abs() < 1e-15);
        assert_eq!(stats.variance(), 0.0);
        assert_eq!(stats.observed_count(), 2);
    }

    #[test]
    fn ema_update_fixed_point() {
        let mut stats = RunningStats::with_state(0.3, 0.04, 0.9, 10, 5).unwrap();
        // batch with mean 0.3 and population variance 0.04
        stats.update(&[0.1, 0.5]).unwrap();
        assert!((stats.mean() - 0.3).abs() < 1e-15);
        assert!((stats.variance() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn ema_update_geometric_series() {
        let mut stats = RunningStats::new(0.99, 50).unwrap();
        for t in 1..=200u32 {
            stats.update(&[1.0, 1.0]).unwrap();
            let expected = 1.0 - 0.99f64.powi(t as i32);
            assert!(
                (stats.mean() - expected).abs() < 1e-12,
                "t={t}: {} vs {expected}",
                stats.mean()
            );
        }
    }

    #[test]
    fn ema_update_rejects_empty_batch() {
        let mut stats = RunningStats::new(0.99, 50).unwrap();
        assert!(stats.update(&[]).is_err());
    }

    #[test]
    fn standardize_identity_before_activation() {
        let stats = RunningStats::new(0.99, 50).unwrap();
        assert_eq!(stats.standardize(0.7, 1e-8), 0.7);
    }

    #[test]
    fn standardize_centered_value_is_zero() {
        let stats = RunningStats::with_state(0.4, 2.0, 0.99, 100, 50).unwrap();
        assert_eq!(stats.standardize(0.4, 1e-8), 0.0);
    }

    #[test]
    fn standardize_unit_variance() {
        let stats = RunningStats::with_state(0.0, 1.0, 0.99, 100, 50).unwrap();
        let z = stats.standardize(2.0, 1e-8);
        assert!((z - 2.0 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((z - 2.0).abs() < 1e-7);
    }

    #[test]
    fn shape_matches_exp_oracle() {
        assert_eq!(shape(0.0, 1.0), 0.0);
        assert_eq!(shape(0.0, 3.7), 0.0);
        let expected = tanh_oracle(1.0);
        assert!((shape(1.0, 1.0) - expected).abs() < 1e-12);
        assert!((shape(1.0, 1.0) - 0.761594).abs() < 1e-6);
    }

    #[test]
    fn shape_saturates_strictly_inside_unit_interval() {
        for z in [1e6, -1e6, 1e308, -1e308] {
            let r = shape(z, 1.0);
            assert!(r.abs() < 1.0, "shape({z}) = {r} must be strictly inside");
            assert!(r.abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn group_advantage_binary_pattern() {
        let adv = group_advantage(&[1.0, 0.0, 0.0, 1.0], 1e-8).unwrap();
        let expected = group_advantage_oracle(&[1.0, 0.0, 0.0, 1.0], 1e-8);
        for (a, e) in adv.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!((adv[0] - 0.866025).abs() < 1e-6);
        assert!((adv[1] + 0.866025).abs() < 1e-6);
    }

    #[test]
    fn group_advantage_constant_group_is_exactly_zero() {
        let adv = group_advantage(&[0.25; 4], 1e-8).unwrap();
        assert_eq!(adv, vec![0.0; 4]);
    }

    #[test]
    fn group_advantage_pair() {
        let adv = group_advantage(&[1.0, 0.0], 1e-8).unwrap();
        assert!((adv[0] - 0.707106).abs() < 1e-6);
        assert!((adv[1] + 0.707106).abs() < 1e-6);
    }

    #[test]
    fn group_advantage_rejects_short_groups() {
        assert!(group_advantage(&[1.0], 1e-8).is_err());
        assert!(group_advantage(&[], 1e-8).is_err());
    }

    #[test]
    fn clipped_surrogate_examples() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2).unwrap() + 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2).unwrap() - 0.8).abs() < 1e-12);
        assert!((clipped_surrogate(1.0, 0.37, 0.2).unwrap() + 0.37).abs() < 1e-12);
    }

    #[test]
    fn clipped_surrogate_rejects_non_positive_ratio() {
        assert!(clipped_surrogate(0.0, 1.0, 0.2).is_err());
        assert!(clipped_surrogate(-1.0, 1.0, 0.2).is_err());
        assert!(clipped_surrogate(f64::NAN, 1.0, 0.2).is_err());
    }

    #[test]
    fn advantage_batch_keeps_lengths_aligned() {
        let batch = AdvantageBatch::from_shaped(vec![0.3, -0.3, 0.1, 0.2], 1e-8).unwrap();
        assert_eq!(batch.shaped_rewards.len(), batch.advantages.len());
        assert_eq!(batch.len(), 4);
    }

    proptest! {
        #[test]
        fn shape_bounded_and_odd(z in -1e6f64..1e6, alpha in 0.01f64..10.0) {
            let r = shape(z, alpha);
            prop_assert!(r.abs() < 1.0);
            prop_assert!((shape(-z, alpha) + r).abs() < 1e-12);
        }

        #[test]
        fn shape_monotone(z in -50.0f64..50.0, dz in 1e-6f64..1.0, alpha in 0.01f64..10.0) {
            prop_assert!(shape(z + dz, alpha) >= shape(z, alpha));
        }

        #[test]
        fn group_advantage_zero_mean(rewards in proptest::collection::vec(-1.0f64..1.0, 2..16)) {
            let eps = 1e-8;
            let adv = group_advantage(&rewards, eps).unwrap();
            let n = rewards.len() as f64;
            let mean = rewards.iter().sum::<f64>() / n;
            let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var.sqrt() > 10.0 * eps {
                let adv_mean = adv.iter().sum::<f64>() / n;
                prop_assert!(adv_mean.abs() <= 1e-7);
            }
        }

        #[test]
        fn group_advantage_shift_invariant(
            rewards in proptest::collection::vec(-1.0f64..1.0, 2..16),
            c in -10.0f64..10.0,
        ) {
            let adv = group_advantage(&rewards, 1e-8).unwrap();
            let shifted: Vec<f64> = rewards.iter().map(|r| r + c).collect();
            let adv_shifted = group_advantage(&shifted, 1e-8).unwrap();
            for (a, b) in adv.iter().zip(&adv_shifted) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn ema_geometric_convergence(
            m0 in -1.0f64..1.0,
            target in -1.0f64..1.0,
            decay in 0.5f64..0.999,
            t in 1u32..120,
        ) {
            let mut stats = RunningStats::with_state(m0, 0.0, decay, 0, 50).unwrap();
            for _ in 0..t {
                stats.update(&[target]).unwrap();
            }
            let expected_gap = (m0 - target).abs() * decay.powi(t as i32);
            prop_assert!(((stats.mean() - target).abs() - expected_gap).abs() < 1e-12);
        }

        #[test]
        fn clipped_surrogate_flat_outside_clip_region(
            adv in 0.01f64..5.0,
            ratio in 1.3f64..4.0,
            d in 1e-4f64..1e-2,
        ) {
            // For positive advantage and ratio beyond 1+eps the surrogate is
            // constant in the ratio; symmetric case below 1-eps.
            let eps = 0.2;
            let hi = clipped_surrogate(ratio + d, adv, eps).unwrap();
            let lo = clipped_surrogate(ratio - d, adv, eps).unwrap();
            prop_assert!(((hi - lo) / (2.0 * d)).abs() <= 1e-9);

            let ratio_low = 1.0 / ratio;
            let hi = clipped_surrogate(ratio_low + d * 1e-2, -adv, eps).unwrap();
            let lo = clipped_surrogate(ratio_low - d * 1e-2, -adv, eps).unwrap();
            prop_assert!(((hi - lo) / (2.0 * d * 1e-2)).abs() <= 1e-9);
        }

        #[test]
        fn variance_never_negative(batches in proptest::collection::vec(
            proptest::collection::vec(-5.0f64..5.0, 1..8), 1..24,
        )) {
            let mut stats = RunningStats::new(0.9, 10).unwrap();
            for batch in &batches {
                stats.update(batch).unwrap();
                prop_assert!(stats.variance() >= 0.0);
            }
        }
    }
}
