//! Ratio clipping as an effective trust region: when every likelihood ratio
//! of a policy pair lies in `[1 - eps, 1 + eps]`, the KL divergence from the
//! old policy to the new one is at most `-ln(1 - eps)`.

use rand::Rng;

use crate::error::{Error, Result};

/// `KL(p || q)` over a shared finite support. Entries of `p` that are zero
/// contribute nothing; a zero in `q` against positive mass in `p` diverges.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| {
            if *qi > 0.0 {
                pi * (pi / qi).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct ClipKlReport {
    /// All ratios `new/old` on the old policy's support lie in the clip range.
    pub ratio_in_bounds: bool,
    pub kl: f64,
    /// `-ln(1 - clip_eps)`.
    pub bound: f64,
    /// Ratios were in bounds yet the KL exceeded the bound (plus slack); this
    /// can never happen and signals a broken implementation.
    pub violation: bool,
}

/// Checks the ratio bounds and the implied KL bound for one policy pair.
pub fn clip_kl_check(pi_old: &[f64], pi_new: &[f64], clip_eps: f64) -> Result<ClipKlReport> {
    if pi_old.len() != pi_new.len() || pi_old.is_empty() {
        return Err(Error::InvalidInput(
            "policy pair must share a non-empty support".to_string(),
        ));
    }
    if !(clip_eps > 0.0 && clip_eps < 1.0) {
        return Err(Error::InvalidInput(format!(
            "clip range must lie in (0, 1), got {clip_eps}"
        )));
    }
    for (name, dist) in [("old", pi_old), ("new", pi_new)] {
        if dist.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "{name} policy has negative or non-finite mass"
            )));
        }
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "{name} policy mass sums to {total}, not 1"
            )));
        }
    }
    let ratio_in_bounds = pi_old.iter().zip(pi_new).all(|(o, n)| {
        if *o > 0.0 {
            let ratio = n / o;
            (1.0 - clip_eps..=1.0 + clip_eps).contains(&ratio)
        } else {
            true
        }
    });
    let kl = kl_divergence(pi_old, pi_new);
    let bound = -(1.0 - clip_eps).ln();
    Ok(ClipKlReport {
        ratio_in_bounds,
        kl,
        bound,
        violation: ratio_in_bounds && kl > bound + 1e-12,
    })
}

/// Rejection-samples a random policy pair whose ratios all satisfy the clip
/// bound: the old policy comes from normalized exponentials, the candidate
/// new policy multiplies each mass by a bounded factor and renormalizes, and
/// the pair is kept only if renormalization left every ratio in bounds.
pub fn random_ratio_bounded_pair<R: Rng + ?Sized>(
    rng: &mut R,
    support: usize,
    clip_eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(support >= 2);
    loop {
        let mut old: Vec<f64> = (0..support)
            .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
            .collect();
        let total: f64 = old.iter().sum();
        old.iter_mut().for_each(|v| *v /= total);

        let shrink: f64 = rng.random();
        let mut new: Vec<f64> = old
            .iter()
            .map(|o| o * (1.0 + clip_eps * shrink * (2.0 * rng.random::<f64>() - 1.0)))
            .collect();
        let total: f64 = new.iter().sum();
        new.iter_mut().for_each(|v| *v /= total);

        let in_bounds = old
            .iter()
            .zip(&new)
            .all(|(o, n)| (1.0 - clip_eps..=1.0 + clip_eps).contains(&(n / o)));
        if in_bounds {
            return (old, new);
        }
    }
}
