//! Rollout rewards: format adherence, evidence-page F-beta, and
//! ANLS answer similarity, combined as a weighted sum.
//!
//! The total reward of a rollout is
//! `lambda_format * R_format + lambda_evidence * R_evidence + lambda_answer * R_answer`
//! where `R_format` is 1 iff the output parses under the strict grammar,
//! `R_evidence` is a recall-weighted F-beta over the cited pages, and
//! `R_answer` is the thresholded normalized Levenshtein similarity of the
//! final answer against the acceptable ground-truth answers.

use crate::grammar::{parse_alr, ParseOutcome};
use crate::normalize::normalize_answer;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("ground truth needs at least one acceptable answer")]
    NoAnswers,
    #[error("ground-truth evidence page {0} out of range: pages are 1-based")]
    PageOutOfRange(u32),
    #[error("reward weights must be non-negative and finite")]
    NegativeWeight,
    #[error("reward weights must not all be zero")]
    ZeroWeightSum,
}

/// Ground-truth label for one sample: the acceptable answer strings and the
/// evidence page set (empty for unanswerable items).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub answers: Vec<String>,
    pub evidence_pages: BTreeSet<u32>,
}

impl GroundTruth {
    pub fn new(
        answers: Vec<String>,
        evidence_pages: impl IntoIterator<Item = u32>,
    ) -> Result<Self, RewardError> {
        let gt = GroundTruth { answers, evidence_pages: evidence_pages.into_iter().collect() };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.answers.is_empty() {
            return Err(RewardError::NoAnswers);
        }
        if self.evidence_pages.contains(&0) {
            return Err(RewardError::PageOutOfRange(0));
        }
        Ok(())
    }
}

/// Non-negative weights for the three reward components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights<F> {
    pub lambda_format: F,
    pub lambda_evidence: F,
    pub lambda_answer: F,
}

impl<F: Scalar> RewardWeights<F> {
    pub fn new(lambda_format: F, lambda_evidence: F, lambda_answer: F) -> Result<Self, RewardError> {
        let w = RewardWeights { lambda_format, lambda_evidence, lambda_answer };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [self.lambda_format, self.lambda_evidence, self.lambda_answer];
        if all.iter().any(|w| !w.is_finite() || *w < F::zero()) {
            return Err(RewardError::NegativeWeight);
        }
        if all.iter().fold(F::zero(), |s, &w| s + w) <= F::zero() {
            return Err(RewardError::ZeroWeightSum);
        }
        Ok(())
    }

    /// Weighted sum of the three components.
    pub fn combine(&self, format: F, evidence: F, answer: F) -> F {
        self.lambda_format * format + self.lambda_evidence * evidence + self.lambda_answer * answer
    }
}

impl<F: Scalar> Default for RewardWeights<F> {
    fn default() -> Self {
        RewardWeights {
            lambda_format: F::from_f64(0.1).unwrap(),
            lambda_evidence: F::from_f64(0.3).unwrap(),
            lambda_answer: F::from_f64(0.6).unwrap(),
        }
    }
}

/// Per-rollout reward components and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<F> {
    pub format: F,
    pub evidence: F,
    pub answer: F,
    pub total: F,
}

impl<F: Scalar> RewardBreakdown<F> {
    /// The all-zero breakdown assigned to malformed rollouts.
    pub fn zero() -> Self {
        RewardBreakdown { format: F::zero(), evidence: F::zero(), answer: F::zero(), total: F::zero() }
    }
}

/// Unit-cost edit distance (insert/delete/substitute) over Unicode scalar
/// values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (j, &bj) in long.iter().enumerate() {
        let mut prev_diag = row[0];
        row[0] = j + 1;
        for (i, &ai) in short.iter().enumerate() {
            let cur = row[i + 1];
            row[i + 1] = if ai == bj {
                prev_diag
            } else {
                1 + prev_diag.min(cur).min(row[i])
            };
            prev_diag = cur;
        }
    }
    row[short.len()]
}

/// Thresholded normalized Levenshtein similarity: both sides are normalized,
/// `NL = dist / max(|pred|, |gt|, 1)`, the per-answer score is `1 - NL` when
/// `NL <= tau` and 0 otherwise, and the best score over the acceptable
/// answers is returned.
pub fn anls_score<F: Scalar, S: AsRef<str>>(pred: &str, gts: &[S], tau: F) -> F {
    let pred_norm = normalize_answer(pred);
    let pred_len = pred_norm.chars().count();
    let mut best = F::zero();
    for gt in gts {
        let gt_norm = normalize_answer(gt.as_ref());
        let gt_len = gt_norm.chars().count();
        let denom = pred_len.max(gt_len).max(1);
        let nl = F::from_count(levenshtein(&pred_norm, &gt_norm)) / F::from_count(denom);
        let score = if nl <= tau { F::one() - nl } else { F::zero() };
        if score > best {
            best = score;
        }
    }
    best
}

/// Recall-weighted F-beta over predicted vs. ground-truth page sets.
///
/// Conventions: both sets empty scores 1, exactly one empty scores 0, and an
/// empty intersection scores 0.
pub fn evidence_reward<F: Scalar>(pred: &BTreeSet<u32>, gt: &BTreeSet<u32>, beta: F) -> F {
    if pred.is_empty() && gt.is_empty() {
        return F::one();
    }
    if pred.is_empty() || gt.is_empty() {
        return F::zero();
    }
    let inter = pred.intersection(gt).count();
    if inter == 0 {
        return F::zero();
    }
    let precision = F::from_count(inter) / F::from_count(pred.len());
    let recall = F::from_count(inter) / F::from_count(gt.len());
    fbeta(precision, recall, beta)
}

/// `(1 + beta^2) * P * R / (beta^2 * P + R)`, 0 when `P = R = 0`.
pub fn fbeta<F: Scalar>(precision: F, recall: F, beta: F) -> F {
    if precision <= F::zero() && recall <= F::zero() {
        return F::zero();
    }
    let b2 = beta * beta;
    ((F::one() + b2) * precision * recall) / (b2 * precision + recall)
}

/// 1 iff the rollout parsed cleanly.
pub fn format_reward<F: Scalar>(outcome: &ParseOutcome) -> F {
    if outcome.is_ok() {
        F::one()
    } else {
        F::zero()
    }
}

/// Parses a raw rollout and scores it against the ground truth. Malformed
/// rollouts score 0 on all three components.
pub fn total_reward<F: Scalar>(
    raw: &str,
    gt: &GroundTruth,
    weights: &RewardWeights<F>,
    beta: F,
    tau: F,
) -> RewardBreakdown<F> {
    breakdown_from_outcome(&parse_alr(raw), gt, weights, beta, tau)
}

/// Scores an already-parsed outcome.
pub fn breakdown_from_outcome<F: Scalar>(
    outcome: &ParseOutcome,
    gt: &GroundTruth,
    weights: &RewardWeights<F>,
    beta: F,
    tau: F,
) -> RewardBreakdown<F> {
    match &outcome.response {
        None => RewardBreakdown::zero(),
        Some(resp) => {
            let format = F::one();
            let evidence = evidence_reward(&resp.page_set(), &gt.evidence_pages, beta);
            let answer = anls_score(&resp.final_answer, &gt.answers, tau);
            RewardBreakdown { format, evidence, answer, total: weights.combine(format, evidence, answer) }
        }
    }
}
