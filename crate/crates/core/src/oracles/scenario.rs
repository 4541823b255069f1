//! One-prompt estimation scenarios with exact and Monte Carlo gradient
//! routes.
//!
//! A scenario fixes one prompt, one active (learning) agent, and freezes all
//! other agents. Each draw yields the active agent's score vector together
//! with the team reward and the counterfactual reward with the active agent's
//! contribution removed. Estimator means are compared against the exact
//! gradient obtained by enumerating every joint outcome.

use rand::Rng;

use crate::env::SequentialTaskEnv;
use crate::error::{Error, Result};
use crate::policy::LogLinearPolicy;
use crate::voting::{vote, Decision, VoteRule};

const MAX_EXACT_OUTCOMES: usize = 1_000_000;

/// Gradient estimator variants for the active agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    /// `score * team_reward` — the shared-reward estimator.
    Shared,
    /// `score * (team_reward - counterfactual_reward)`.
    Counterfactual,
    /// `score * (team_reward - b)` for a fixed scalar baseline.
    ScalarBaseline(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub samples: usize,
}

/// One sampled outcome from the active agent's perspective.
#[derive(Debug, Clone)]
pub struct Draw {
    pub score: Vec<f64>,
    pub team_reward: f64,
    pub cf_reward: f64,
}

/// A fixed-prompt scenario with a designated active agent.
#[derive(Debug, Clone)]
pub enum Scenario {
    /// Independent voters on a single context; the counterfactual removes the
    /// active agent's ballot and re-applies the rule.
    Voting {
        policies: Vec<LogLinearPolicy>,
        truth: usize,
        active: usize,
    },
    /// Handoff pair with the thinker active; the counterfactual answers from
    /// the no-message context, reusing the rollout's uniform draw.
    Sequential {
        thinker: LogLinearPolicy,
        solver: LogLinearPolicy,
        env: SequentialTaskEnv,
        prompt: usize,
    },
}

impl Scenario {
    /// Dimension of the active agent's score vector.
    pub fn action_count(&self) -> usize {
        match self {
            Scenario::Voting { policies, active, .. } => policies[*active].actions(),
            Scenario::Sequential { thinker, .. } => thinker.actions(),
        }
    }

    /// Number of joint outcomes an exact enumeration must visit.
    pub fn outcome_count(&self) -> usize {
        match self {
            Scenario::Voting { policies, .. } => policies
                .iter()
                .map(|p| p.actions())
                .product(),
            Scenario::Sequential { thinker, solver, .. } => {
                thinker.actions() * solver.actions()
            }
        }
    }

    /// Exact gradient of the expected team reward with respect to the active
    /// agent's logit row, by full enumeration of joint outcomes.
    pub fn exact_gradient(&self) -> Result<Vec<f64>> {
        if self.outcome_count() > MAX_EXACT_OUTCOMES {
            return Err(Error::TooLarge(format!(
                "{} joint outcomes exceed the enumeration limit {MAX_EXACT_OUTCOMES}",
                self.outcome_count()
            )));
        }
        match self {
            Scenario::Voting {
                policies,
                truth,
                active,
            } => {
                let k = policies.len();
                let probs: Vec<Vec<f64>> = policies
                    .iter()
                    .map(|p| p.probs(0))
                    .collect::<Result<_>>()?;
                let mut grad = vec![0.0; policies[*active].actions()];
                let mut ballots = vec![0usize; k];
                loop {
                    let mut p = 1.0;
                    for (i, b) in ballots.iter().enumerate() {
                        p *= probs[i][*b];
                    }
                    let reward = vote(&ballots, VoteRule::default())?.reward(*truth);
                    if reward > 0.0 && p > 0.0 {
                        let score = policies[*active].score(0, ballots[*active])?;
                        for (g, s) in grad.iter_mut().zip(&score) {
                            *g += p * reward * s;
                        }
                    }
                    if !increment(&mut ballots, &policies.iter().map(|p| p.actions()).collect::<Vec<_>>()) {
                        break;
                    }
                }
                Ok(grad)
            }
            Scenario::Sequential {
                thinker,
                solver,
                env,
                prompt,
            } => {
                let msg_probs = thinker.probs(*prompt)?;
                let mut grad = vec![0.0; thinker.actions()];
                for message in 0..thinker.actions() {
                    let ctx = env.solver_context(*prompt, message);
                    let answer_probs = solver.probs(ctx)?;
                    let mut expected_reward = 0.0;
                    for (answer, ap) in answer_probs.iter().enumerate() {
                        expected_reward += ap * env.reward(*prompt, answer);
                    }
                    let score = thinker.score(*prompt, message)?;
                    for (g, s) in grad.iter_mut().zip(&score) {
                        *g += msg_probs[message] * expected_reward * s;
                    }
                }
                Ok(grad)
            }
        }
    }

    /// Samples one outcome: active agent's score, team reward, and the
    /// counterfactual reward.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Draw> {
        match self {
            Scenario::Voting {
                policies,
                truth,
                active,
            } => {
                let mut ballots = Vec::with_capacity(policies.len());
                for p in policies {
                    ballots.push(p.sample(0, rng)?);
                }
                let team_reward = vote(&ballots, VoteRule::default())?.reward(*truth);
                let cf_reward = if policies.len() >= 2 {
                    let reduced: Vec<usize> = ballots
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != *active)
                        .map(|(_, b)| *b)
                        .collect();
                    vote(&reduced, VoteRule::default())?.reward(*truth)
                } else {
                    // removing the only voter leaves an abstaining team
                    Decision::Abstain.reward(*truth)
                };
                Ok(Draw {
                    score: policies[*active].score(0, ballots[*active])?,
                    team_reward,
                    cf_reward,
                })
            }
            Scenario::Sequential {
                thinker,
                solver,
                env,
                prompt,
            } => {
                let message = thinker.sample(*prompt, rng)?;
                let u: f64 = rng.random();
                let answer = solver.sample_with_uniform(env.solver_context(*prompt, message), u)?;
                let solo = solver.sample_with_uniform(env.solver_solo_context(*prompt), u)?;
                Ok(Draw {
                    score: thinker.score(*prompt, message)?,
                    team_reward: env.reward(*prompt, answer),
                    cf_reward: env.reward(*prompt, solo),
                })
            }
        }
    }
}

fn increment(digits: &mut [usize], radices: &[usize]) -> bool {
    for (d, r) in digits.iter_mut().zip(radices) {
        *d += 1;
        if *d < *r {
            return true;
        }
        *d = 0;
    }
    false
}

/// Monte Carlo mean of an estimator, its scalar variance (trace of the
/// per-draw covariance), and per-component standard errors of the mean.
#[derive(Debug, Clone)]
pub struct McGradient {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub component_se: Vec<f64>,
}

pub fn mc_gradient<R: Rng + ?Sized>(
    scenario: &Scenario,
    estimator: &EstimatorSpec,
    rng: &mut R,
) -> Result<McGradient> {
    if estimator.samples < 1_000 {
        return Err(Error::InvalidInput(format!(
            "bias checks need at least 1000 samples, got {}",
            estimator.samples
        )));
    }
    let dim = scenario.action_count();
    let m = estimator.samples;
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..m {
        let draw = scenario.sample(rng)?;
        let weight = match estimator.kind {
            EstimatorKind::Shared => draw.team_reward,
            EstimatorKind::Counterfactual => draw.team_reward - draw.cf_reward,
            EstimatorKind::ScalarBaseline(b) => draw.team_reward - b,
        };
        for ((s, sq), score) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&draw.score) {
            let v = score * weight;
            *s += v;
            *sq += v * v;
        }
    }
    let mf = m as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let component_var: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| (sq / mf - mu * mu).max(0.0))
        .collect();
    Ok(McGradient {
        variance: component_var.iter().sum(),
        component_se: component_var.iter().map(|v| (v / mf).sqrt()).collect(),
        mean,
    })
}

/// Monte Carlo mean and standard error of `score * cf_reward`, the term whose
/// expectation must vanish for the counterfactual subtraction to be unbiased.
pub fn baseline_nulling<R: Rng + ?Sized>(
    scenario: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples < 1_000 {
        return Err(Error::InvalidInput(format!(
            "bias checks need at least 1000 samples, got {samples}"
        )));
    }
    let dim = scenario.action_count();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..samples {
        let draw = scenario.sample(rng)?;
        for ((s, sq), score) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&draw.score) {
            let v = score * draw.cf_reward;
            *s += v;
            *sq += v * v;
        }
    }
    let mf = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let se = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| ((sq / mf - mu * mu).max(0.0) / mf).sqrt())
        .collect();
    Ok((mean, se))
}

/// Variance-optimal scalar baseline: the ratio estimator together with the
/// argmin of the empirical estimator variance over a baseline grid in [0, 1]
/// with step 0.01, computed from the same draws.
#[derive(Debug, Clone, Copy)]
pub struct BaselineReport {
    pub formula: f64,
    pub grid_argmin: f64,
}

pub fn optimal_baseline<R: Rng + ?Sized>(
    scenario: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<BaselineReport> {
    if samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "baseline estimation needs at least 1e4 samples, got {samples}"
        )));
    }
    let dim = scenario.action_count();
    let mf = samples as f64;
    // sufficient statistics for the closed-form variance of g*(R-b)
    let mut sum_g2 = 0.0;
    let mut sum_g2_r = 0.0;
    let mut sum_g2_r2 = 0.0;
    let mut sum_g = vec![0.0; dim];
    let mut sum_gr = vec![0.0; dim];
    for _ in 0..samples {
        let draw = scenario.sample(rng)?;
        let g2: f64 = draw.score.iter().map(|s| s * s).sum();
        sum_g2 += g2;
        sum_g2_r += g2 * draw.team_reward;
        sum_g2_r2 += g2 * draw.team_reward * draw.team_reward;
        for ((sg, sgr), score) in sum_g.iter_mut().zip(sum_gr.iter_mut()).zip(&draw.score) {
            *sg += score;
            *sgr += score * draw.team_reward;
        }
    }
    if sum_g2 == 0.0 {
        return Err(Error::Degenerate(
            "score norm is identically zero; every baseline is optimal".to_string(),
        ));
    }
    let formula = sum_g2_r / sum_g2;

    let mean_g: Vec<f64> = sum_g.iter().map(|v| v / mf).collect();
    let mean_gr: Vec<f64> = sum_gr.iter().map(|v| v / mf).collect();
    let variance_at = |b: f64| -> f64 {
        let second_moment = (sum_g2_r2 - 2.0 * b * sum_g2_r + b * b * sum_g2) / mf;
        let mean_norm_sq: f64 = mean_gr
            .iter()
            .zip(&mean_g)
            .map(|(gr, g)| {
                let c = gr - b * g;
                c * c
            })
            .sum();
        second_moment - mean_norm_sq
    };
    let mut grid_argmin = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..=100 {
        let b = k as f64 * 0.01;
        let v = variance_at(b);
        if v < best {
            best = v;
            grid_argmin = b;
        }
    }
    Ok(BaselineReport {
        formula,
        grid_argmin,
    })
}

/// Shared-vs-counterfactual variance comparison with the sufficient condition
/// from the optimal-baseline decomposition, plus a nonparametric bootstrap of
/// the variance difference.
#[derive(Debug, Clone, Copy)]
pub struct VarianceReport {
    pub var_shared: f64,
    pub var_cf: f64,
    /// Weighted mean-square distance of the counterfactual reward from the
    /// optimal baseline.
    pub condition_lhs: f64,
    /// Weighted mean-square distance of the zero baseline from the optimal
    /// baseline.
    pub condition_rhs: f64,
    pub condition_holds: bool,
    /// Bootstrap standard error of `var_shared - var_cf` (zero when no
    /// resamples were requested).
    pub diff_se: f64,
    /// Bootstrap 95% interval of `var_shared - var_cf`.
    pub diff_ci: (f64, f64),
}

impl VarianceReport {
    /// The claim under test: whenever the condition holds, the counterfactual
    /// estimator's variance does not exceed the shared one beyond noise.
    pub fn implication_holds(&self) -> bool {
        !self.condition_holds || self.var_cf <= self.var_shared + 3.0 * self.diff_se
    }
}

pub fn variance_comparison<R: Rng + ?Sized>(
    scenario: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<VarianceReport> {
    variance_comparison_with_resamples(scenario, samples, 1_000, rng)
}

pub fn variance_comparison_with_resamples<R: Rng + ?Sized>(
    scenario: &Scenario,
    samples: usize,
    resamples: usize,
    rng: &mut R,
) -> Result<VarianceReport> {
    if samples < 100_000 {
        return Err(Error::InvalidInput(format!(
            "variance comparison needs at least 1e5 samples, got {samples}"
        )));
    }
    let dim = scenario.action_count();
    let mf = samples as f64;
    // per-draw estimator values, flattened for the bootstrap
    let mut shared_flat = vec![0.0; samples * dim];
    let mut cf_flat = vec![0.0; samples * dim];
    let mut shared_norm2 = vec![0.0; samples];
    let mut cf_norm2 = vec![0.0; samples];
    let mut sum_g2 = 0.0;
    let mut sum_g2_r = 0.0;
    let mut cond_lhs_sum = 0.0;
    let mut cf_values = vec![0.0; samples];
    let mut g2_values = vec![0.0; samples];
    for i in 0..samples {
        let draw = scenario.sample(rng)?;
        let delta = draw.team_reward - draw.cf_reward;
        let g2: f64 = draw.score.iter().map(|s| s * s).sum();
        sum_g2 += g2;
        sum_g2_r += g2 * draw.team_reward;
        g2_values[i] = g2;
        cf_values[i] = draw.cf_reward;
        let mut s_n2 = 0.0;
        let mut c_n2 = 0.0;
        for (d, score) in draw.score.iter().enumerate() {
            let sv = score * draw.team_reward;
            let cv = score * delta;
            shared_flat[i * dim + d] = sv;
            cf_flat[i * dim + d] = cv;
            s_n2 += sv * sv;
            c_n2 += cv * cv;
        }
        shared_norm2[i] = s_n2;
        cf_norm2[i] = c_n2;
    }
    if sum_g2 == 0.0 {
        return Err(Error::Degenerate(
            "score norm is identically zero".to_string(),
        ));
    }
    let b_star = sum_g2_r / sum_g2;
    for i in 0..samples {
        let dev = cf_values[i] - b_star;
        cond_lhs_sum += g2_values[i] * dev * dev;
    }
    let condition_lhs = cond_lhs_sum / mf;
    let condition_rhs = sum_g2 / mf * b_star * b_star;

    let variance_of = |flat: &[f64], norm2: &[f64]| -> f64 {
        let mut mean = vec![0.0; dim];
        for i in 0..samples {
            for d in 0..dim {
                mean[d] += flat[i * dim + d];
            }
        }
        let second: f64 = norm2.iter().sum::<f64>() / mf;
        let mean_norm: f64 = mean.iter().map(|v| (v / mf) * (v / mf)).sum();
        second - mean_norm
    };
    let var_shared = variance_of(&shared_flat, &shared_norm2);
    let var_cf = variance_of(&cf_flat, &cf_norm2);

    let (diff_se, diff_ci) = if resamples == 0 {
        (0.0, (var_shared - var_cf, var_shared - var_cf))
    } else {
        let mut diffs = Vec::with_capacity(resamples);
        let mut mean_s = vec![0.0; dim];
        let mut mean_c = vec![0.0; dim];
        for _ in 0..resamples {
            mean_s.iter_mut().for_each(|v| *v = 0.0);
            mean_c.iter_mut().for_each(|v| *v = 0.0);
            let mut second_s = 0.0;
            let mut second_c = 0.0;
            for _ in 0..samples {
                let i = rng.random_range(0..samples);
                second_s += shared_norm2[i];
                second_c += cf_norm2[i];
                for d in 0..dim {
                    mean_s[d] += shared_flat[i * dim + d];
                    mean_c[d] += cf_flat[i * dim + d];
                }
            }
            let vs = second_s / mf - mean_s.iter().map(|v| (v / mf) * (v / mf)).sum::<f64>();
            let vc = second_c / mf - mean_c.iter().map(|v| (v / mf) * (v / mf)).sum::<f64>();
            diffs.push(vs - vc);
        }
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean_diff: f64 = diffs.iter().sum::<f64>() / resamples as f64;
        let var_diff: f64 = diffs
            .iter()
            .map(|d| (d - mean_diff) * (d - mean_diff))
            .sum::<f64>()
            / (resamples as f64 - 1.0);
        let lo = diffs[((resamples as f64) * 0.025) as usize];
        let hi = diffs[(((resamples as f64) * 0.975) as usize).min(resamples - 1)];
        (var_diff.sqrt(), (lo, hi))
    };

    Ok(VarianceReport {
        var_shared,
        var_cf,
        condition_lhs,
        condition_rhs,
        condition_holds: condition_lhs <= condition_rhs,
        diff_se,
        diff_ci,
    })
}
