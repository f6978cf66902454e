//! Beta-Binomial modeling of prompt success probabilities.
//!
//! Each prompt's unknown success probability `p` carries a Beta prior.
//! Observing `c` correct rollouts out of `G0` pre-rollouts gives, by
//! conjugacy, the posterior
//!
//! ```text
//! p | c  ~  Beta(alpha0 + c, beta0 + G0 - c).
//! ```
//!
//! The *hit utility* of `delta` additional rollouts is the posterior
//! probability that at least one of them is correct,
//!
//! ```text
//! U(delta) = E[1 - (1 - p)^delta] = 1 - B(alpha, beta + delta) / B(alpha, beta),
//! ```
//!
//! and the *marginal gain* of the `(ell+1)`-th rollout is
//!
//! ```text
//! M(ell) = U(ell + 1) - U(ell) = B(alpha + 1, beta + ell) / B(alpha, beta).
//! ```
//!
//! Marginals are evaluated with the stable recurrence
//! `M(0) = alpha / (alpha + beta)`,
//! `M(ell + 1) = M(ell) * (beta + ell) / (alpha + beta + ell + 1)`;
//! every factor lies in (0, 1), so nothing overflows and no beta function is
//! ever formed explicitly. A log-space beta-function evaluation exists only
//! in the test suite as an independent oracle.
//!
//! All operations here are pure functions of their arguments; the types are
//! `Copy` and safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default clamp range for the prior strength `s` supplied with an external
/// per-prompt estimate. Out-of-range `s` is pulled to the nearest bound;
/// out-of-range `p_hat` is an error, never a clamp.
pub const DEFAULT_STRENGTH_CLAMP: (f64, f64) = (0.25, 16.0);

/// Shape pair (alpha, beta) of a Beta distribution over a success
/// probability. Both pseudo-counts must be positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    /// Create validated parameters.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let params = BetaParams { alpha, beta };
        params.validate("beta_params")?;
        Ok(params)
    }

    /// The uniform prior Beta(1, 1).
    pub fn uniform() -> Self {
        BetaParams {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    /// Check the shape invariants, reporting failures against `field`.
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::validation(
                format!("{field}.alpha"),
                format!("must be positive and finite, got {}", self.alpha),
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::validation(
                format!("{field}.beta"),
                format!("must be positive and finite, got {}", self.beta),
            ));
        }
        Ok(())
    }

    /// Posterior mean alpha / (alpha + beta).
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// One prompt's pre-rollout observation: `correct` successes out of
/// `pre_rollouts` draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEvidence {
    pub prompt_id: u32,
    pub pre_rollouts: u32,
    pub correct: u32,
}

impl PromptEvidence {
    pub fn new(prompt_id: u32, pre_rollouts: u32, correct: u32) -> Result<Self> {
        let evidence = PromptEvidence {
            prompt_id,
            pre_rollouts,
            correct,
        };
        evidence.validate("evidence")?;
        Ok(evidence)
    }

    /// Check `correct <= pre_rollouts`, reporting failures against `field`.
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.correct > self.pre_rollouts {
            return Err(Error::validation(
                format!("{field}.correct"),
                format!(
                    "correct ({}) exceeds pre_rollouts ({})",
                    self.correct, self.pre_rollouts
                ),
            ));
        }
        Ok(())
    }
}

/// Conjugate posterior update: `(alpha0 + c, beta0 + G0 - c)`.
pub fn posterior_from_counts(prior: BetaParams, evidence: &PromptEvidence) -> Result<BetaParams> {
    prior.validate("prior")?;
    evidence.validate("evidence")?;
    Ok(BetaParams {
        alpha: prior.alpha + f64::from(evidence.correct),
        beta: prior.beta + f64::from(evidence.pre_rollouts - evidence.correct),
    })
}

/// Posterior built from an externally supplied per-prompt estimate
/// `(p_hat, s)` instead of a fixed prior:
/// `(s * p_hat + c, s * (1 - p_hat) + G0 - c)`.
///
/// `s` is clamped to [`DEFAULT_STRENGTH_CLAMP`] before combining. With
/// `s = 2` and `p_hat = 0.5` this reduces to the uniform-prior update.
pub fn posterior_from_prior_estimate(
    p_hat: f64,
    s: f64,
    evidence: &PromptEvidence,
) -> Result<BetaParams> {
    posterior_from_prior_estimate_clamped(p_hat, s, DEFAULT_STRENGTH_CLAMP, evidence)
}

/// As [`posterior_from_prior_estimate`] with an explicit clamp range for `s`.
pub fn posterior_from_prior_estimate_clamped(
    p_hat: f64,
    s: f64,
    clamp: (f64, f64),
    evidence: &PromptEvidence,
) -> Result<BetaParams> {
    evidence.validate("evidence")?;
    if !(p_hat.is_finite() && p_hat > 0.0 && p_hat < 1.0) {
        return Err(Error::validation(
            "p_hat",
            format!("must lie strictly inside (0, 1), got {p_hat}"),
        ));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::validation(
            "s",
            format!("must be positive and finite, got {s}"),
        ));
    }
    let (lo, hi) = clamp;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
        return Err(Error::validation(
            "s_clamp",
            format!("invalid clamp range [{lo}, {hi}]"),
        ));
    }
    let s = s.clamp(lo, hi);
    Ok(BetaParams {
        alpha: s * p_hat + f64::from(evidence.correct),
        beta: s * (1.0 - p_hat) + f64::from(evidence.pre_rollouts - evidence.correct),
    })
}

/// Posterior probability that at least one of `delta` additional rollouts is
/// correct: `1 - B(alpha, beta + delta) / B(alpha, beta)`.
///
/// Evaluated as `1 - prod_{l < delta} (beta + l) / (alpha + beta + l)`; each
/// factor is in (0, 1). Once the running survival product underflows to zero
/// the result is exactly 1.
pub fn hit_utility(post: &BetaParams, delta: u64) -> f64 {
    let total = post.alpha + post.beta;
    let mut survival = 1.0_f64;
    for l in 0..delta {
        let l = l as f64;
        survival *= (post.beta + l) / (total + l);
        if survival == 0.0 {
            return 1.0;
        }
    }
    1.0 - survival
}

/// Marginal hit utility `M(ell) = hit_utility(ell + 1) - hit_utility(ell)
/// = B(alpha + 1, beta + ell) / B(alpha, beta)`, always strictly positive.
pub fn marginal_gain(post: &BetaParams, ell: u64) -> f64 {
    let total = post.alpha + post.beta;
    let mut m = post.alpha / total;
    for l in 0..ell {
        let l = l as f64;
        m *= (post.beta + l) / (total + l + 1.0);
    }
    m
}

/// The first `length` marginal gains `[M(0), ..., M(length - 1)]` computed
/// with the recurrence `M(ell + 1) = M(ell) * (beta + ell) / (alpha + beta +
/// ell + 1)`.
pub fn marginal_sequence(post: &BetaParams, length: usize) -> Vec<f64> {
    let total = post.alpha + post.beta;
    let mut out = Vec::with_capacity(length);
    let mut m = post.alpha / total;
    for l in 0..length {
        out.push(m);
        m *= (post.beta + l as f64) / (total + l as f64 + 1.0);
    }
    out
}
