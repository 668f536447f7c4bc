//! Group-relative advantage computation over sampled rollouts, plus the
//! online zero-advantage filter.
//!
//! Advantages standardize rewards within a rollout group:
//! `A_i = (r_i - mean(r)) / (std_pop(r) + epsilon)` with the population
//! standard deviation. Groups whose rewards are all effectively identical
//! carry no policy-gradient signal and are dropped (advantages zeroed,
//! `kept = false`). The policy-gradient step itself, KL terms, and clipping
//! belong to the external trainer.

use crate::reward::{total_reward, GroundTruth, RewardBreakdown, RewardWeights};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("a rollout group needs at least two rollouts, got {0}")]
    TooFewRollouts(usize),
}

/// One question's sampled rollouts with their rewards, standardized
/// advantages, and the online-filter verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup<F> {
    pub question_id: String,
    pub rewards: Vec<F>,
    pub advantages: Vec<F>,
    pub kept: bool,
    /// Per-rollout component breakdowns; empty when the group was built from
    /// bare rewards.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakdowns: Vec<RewardBreakdown<F>>,
}

/// Everything needed to score a rollout group: reward weights plus the
/// F-beta, ANLS-threshold, standardization, and filter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig<F> {
    pub weights: RewardWeights<F>,
    pub beta: F,
    pub tau: F,
    pub epsilon: F,
    pub tol: F,
}

impl<F: Scalar> Default for ScoringConfig<F> {
    fn default() -> Self {
        ScoringConfig {
            weights: RewardWeights::default(),
            beta: F::from_f64(2.0).unwrap(),
            tau: F::from_f64(0.5).unwrap(),
            epsilon: F::from_f64(1e-8).unwrap(),
            tol: F::from_f64(1e-9).unwrap(),
        }
    }
}

/// Standardizes rewards within a group against the population standard
/// deviation. Requires at least two rollouts.
pub fn group_advantages<F: Scalar>(rewards: &[F], epsilon: F) -> Result<Vec<F>, GroupError> {
    if rewards.len() < 2 {
        return Err(GroupError::TooFewRollouts(rewards.len()));
    }
    let n = F::from_count(rewards.len());
    let mean = rewards.iter().fold(F::zero(), |s, &r| s + r) / n;
    let var = rewards.iter().fold(F::zero(), |s, &r| s + (r - mean) * (r - mean)) / n;
    let std = var.sqrt();
    Ok(rewards.iter().map(|&r| (r - mean) / (std + epsilon)).collect())
}

/// Reward spread `max(r) - min(r)`, 0 for empty groups.
pub fn reward_spread<F: Scalar>(rewards: &[F]) -> F {
    match rewards.iter().copied().reduce(F::max).zip(rewards.iter().copied().reduce(F::min)) {
        Some((max, min)) => max - min,
        None => F::zero(),
    }
}

/// Drops groups whose reward spread is at most `tol`: such a group yields no
/// usable advantage signal, so `kept` is cleared and its advantages zeroed.
pub fn zero_advantage_filter<F: Scalar>(mut group: RolloutGroup<F>, tol: F) -> RolloutGroup<F> {
    if reward_spread(&group.rewards) <= tol {
        group.kept = false;
        for a in &mut group.advantages {
            *a = F::zero();
        }
    } else {
        group.kept = true;
    }
    group
}

/// Scores a group of raw rollout texts end to end: per-rollout reward
/// breakdowns, standardized advantages, and the zero-advantage filter.
pub fn score_group<F: Scalar, S: AsRef<str>>(
    question_id: impl Into<String>,
    raws: &[S],
    gt: &GroundTruth,
    cfg: &ScoringConfig<F>,
) -> Result<RolloutGroup<F>, GroupError> {
    let breakdowns: Vec<RewardBreakdown<F>> = raws
        .iter()
        .map(|raw| total_reward(raw.as_ref(), gt, &cfg.weights, cfg.beta, cfg.tau))
        .collect();
    let rewards: Vec<F> = breakdowns.iter().map(|b| b.total).collect();
    let advantages = group_advantages(&rewards, cfg.epsilon)?;
    let group = RolloutGroup {
        question_id: question_id.into(),
        rewards,
        advantages,
        kept: true,
        breakdowns,
    };
    Ok(zero_advantage_filter(group, cfg.tol))
}
