//! Log-linear softmax policies over discrete contexts and actions.
//!
//! A policy is a logit table of shape `contexts x actions`. Sampling uses
//! inverse-CDF transforms so that a single uniform draw maps deterministically
//! to an action; two contexts with identical logit rows therefore map the same
//! uniform to the same action.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearPolicy {
    contexts: usize,
    actions: usize,
    params: Vec<f64>,
}

impl LogLinearPolicy {
    /// Uniform policy (all logits zero).
    pub fn uniform(contexts: usize, actions: usize) -> Result<Self> {
        if contexts == 0 || actions == 0 {
            return Err(Error::InvalidInput(format!(
                "policy needs positive context and action counts, got {contexts}x{actions}"
            )));
        }
        Ok(Self {
            contexts,
            actions,
            params: vec![0.0; contexts * actions],
        })
    }

    pub fn from_params(contexts: usize, actions: usize, params: Vec<f64>) -> Result<Self> {
        let mut policy = Self::uniform(contexts, actions)?;
        if params.len() != contexts * actions {
            return Err(Error::InvalidInput(format!(
                "parameter table must have {} entries, got {}",
                contexts * actions,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(
                "parameter table must be finite".to_string(),
            ));
        }
        policy.params = params;
        Ok(policy)
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_context(&self, context: usize) -> Result<()> {
        if context >= self.contexts {
            return Err(Error::InvalidInput(format!(
                "context {context} out of range (policy has {} contexts)",
                self.contexts
            )));
        }
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.actions {
            return Err(Error::InvalidInput(format!(
                "action {action} out of range (policy has {} actions)",
                self.actions
            )));
        }
        Ok(())
    }

    /// Logit row for one context.
    pub fn logits(&self, context: usize) -> Result<&[f64]> {
        self.check_context(context)?;
        let start = context * self.actions;
        Ok(&self.params[start..start + self.actions])
    }

    pub fn set_logit(&mut self, context: usize, action: usize, value: f64) -> Result<()> {
        self.check_context(context)?;
        self.check_action(action)?;
        self.params[context * self.actions + action] = value;
        Ok(())
    }

    /// Action probabilities of one context (softmax of its logit row).
    pub fn probs(&self, context: usize) -> Result<Vec<f64>> {
        let row = self.logits(context)?;
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / sum).collect())
    }

    /// `logit - logsumexp(row)`.
    pub fn log_prob(&self, context: usize, action: usize) -> Result<f64> {
        self.check_action(action)?;
        let row = self.logits(context)?;
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        Ok(row[action] - max - sum.ln())
    }

    /// Gradient of `log_prob(context, action)` with respect to the context's
    /// logit row: `one_hot(action) - probs(context)`.
    pub fn score(&self, context: usize, action: usize) -> Result<Vec<f64>> {
        self.check_action(action)?;
        let mut probs = self.probs(context)?;
        for (a, p) in probs.iter_mut().enumerate() {
            *p = if a == action { 1.0 - *p } else { -*p };
        }
        Ok(probs)
    }

    /// Maps one uniform draw in [0, 1) to an action by walking the CDF.
    pub fn sample_with_uniform(&self, context: usize, u: f64) -> Result<usize> {
        let probs = self.probs(context)?;
        let mut acc = 0.0;
        for (action, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(action);
            }
        }
        // cumulative rounding can leave u >= acc by a few ulps
        Ok(self.actions - 1)
    }

    /// Draws one action; consumes exactly one uniform from the generator.
    pub fn sample<R: Rng + ?Sized>(&self, context: usize, rng: &mut R) -> Result<usize> {
        let u: f64 = rng.random();
        self.sample_with_uniform(context, u)
    }

    /// Highest-probability action; ties resolve to the lowest index.
    pub fn greedy(&self, context: usize) -> Result<usize> {
        let row = self.logits(context)?;
        let mut best = 0;
        for (a, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = a;
            }
        }
        Ok(best)
    }
}
