//! Non-neural tooling for page-grounded document question answering:
//!
//! - [`grammar`] — strict parser/renderer for the ALR
//!   (Analysis–Localization–Reasoning) structured output format;
//! - [`reward`] — format / evidence-F-beta / ANLS answer rewards and their
//!   weighted total, for scoring RL rollouts;
//! - [`grpo`] — group-relative advantage standardization and the online
//!   zero-advantage filter;
//! - [`egra`] — evidence-guided per-page visual-token budgets and sequence
//!   length accounting;
//! - [`distill`] — minimal-context teacher requests plus two-stage
//!   (exact-match, then judge) verification of distilled CoT data;
//! - [`eval`] — corpus metrics, the stage-wise error breakdown, retrieval
//!   top-k sweeps, and the length-truncation protocol;
//! - [`wire`] — canonical JSON used across process boundaries.
//!
//! The numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the `*64` aliases below pin the common `f64` instantiation used by the
//! CLI and the reward service.

pub mod distill;
pub mod egra;
pub mod eval;
pub mod grammar;
pub mod grpo;
pub mod normalize;
pub mod reward;
pub mod scalar;
pub mod wire;

pub use grammar::{parse_alr, parse_vanilla, render_alr, AlrResponse, ParseOutcome, ParseStatus};
pub use reward::{
    anls_score, evidence_reward, format_reward, levenshtein, total_reward, GroundTruth,
};
pub use scalar::Scalar;

/// `f64` instantiations used across the CLI and service layers.
pub type RewardWeights64 = reward::RewardWeights<f64>;
pub type RewardBreakdown64 = reward::RewardBreakdown<f64>;
pub type RolloutGroup64 = grpo::RolloutGroup<f64>;
pub type ScoringConfig64 = grpo::ScoringConfig<f64>;
pub type RagSweepRow64 = eval::RagSweepRow<f64>;

/// Default ANLS acceptance threshold.
pub const DEFAULT_TAU: f64 = 0.5;
/// Default recall weighting of the evidence F-beta reward.
pub const DEFAULT_BETA: f64 = 2.0;
/// Default standardization guard added to the reward standard deviation.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Default reward-spread tolerance of the zero-advantage filter.
pub const DEFAULT_SPREAD_TOL: f64 = 1e-9;
