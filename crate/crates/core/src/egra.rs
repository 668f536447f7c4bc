//! Evidence-guided per-page visual-token budgets and input-sequence length
//! accounting.
//!
//! Evidence pages always keep the high budget; a fixed fraction of the
//! non-evidence pages (70% by default) is downsampled to the low budget,
//! chosen by a seeded uniform shuffle so every plan is reproducible. The
//! assembled input sequence is `question ++ (page-id ++ page-tokens)*`, so
//! its length is the question length plus, per page, the identifier overhead
//! plus that page's budget.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Pixel side of one square token cell used by [`inference_budget`].
pub const DEFAULT_PX_PER_TOKEN: u32 = 56;

#[derive(Debug, Error, PartialEq)]
pub enum EgraError {
    #[error("document needs at least one page")]
    NoPages,
    #[error("evidence page {page} out of range 1..={num_pages}")]
    PageOutOfRange { page: u32, num_pages: u32 },
    #[error("budgets must satisfy hi_budget > lo_budget > 0, got hi={hi} lo={lo}")]
    BadBudgets { hi: u32, lo: u32 },
    #[error("downsample_fraction must be in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("image dimensions and px_per_token must be positive")]
    ZeroDimension,
}

/// Budget-allocation knobs. Defaults: 1024 tokens for high-resolution pages,
/// 256 for downsampled ones, 70% of non-evidence pages downsampled, 3 tokens
/// per page identifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgraConfig {
    pub hi_budget: u32,
    pub lo_budget: u32,
    pub downsample_fraction: f64,
    pub page_id_overhead: u32,
    pub question_tokens: u32,
}

impl Default for EgraConfig {
    fn default() -> Self {
        EgraConfig {
            hi_budget: 1024,
            lo_budget: 256,
            downsample_fraction: 0.7,
            page_id_overhead: 3,
            question_tokens: 0,
        }
    }
}

impl EgraConfig {
    pub fn validate(&self) -> Result<(), EgraError> {
        if self.hi_budget <= self.lo_budget || self.lo_budget == 0 {
            return Err(EgraError::BadBudgets { hi: self.hi_budget, lo: self.lo_budget });
        }
        if !(0.0..=1.0).contains(&self.downsample_fraction) {
            return Err(EgraError::BadFraction(self.downsample_fraction));
        }
        Ok(())
    }
}

/// Per-page token budgets for one document (index = page - 1) plus the
/// token totals implied by the config the plan was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionPlan {
    pub budgets: Vec<u32>,
    pub evidence_pages: BTreeSet<u32>,
    pub seed: u64,
    pub total_visual_tokens: u64,
    pub total_sequence_tokens: u64,
}

impl ResolutionPlan {
    pub fn num_pages(&self) -> u32 {
        self.budgets.len() as u32
    }

    /// Budget of a 1-based page.
    pub fn budget_of(&self, page: u32) -> Option<u32> {
        self.budgets.get((page as usize).checked_sub(1)?).copied()
    }
}

/// Assigns per-page budgets: every evidence page gets `hi_budget`; exactly
/// `round(downsample_fraction * |non-evidence|)` non-evidence pages get
/// `lo_budget` (round half to even), chosen by a seeded uniform shuffle.
/// Deterministic for fixed inputs and seed.
pub fn allocate(
    num_pages: u32,
    evidence_pages: &BTreeSet<u32>,
    cfg: &EgraConfig,
    seed: u64,
) -> Result<ResolutionPlan, EgraError> {
    cfg.validate()?;
    if num_pages == 0 {
        return Err(EgraError::NoPages);
    }
    for &page in evidence_pages {
        if page < 1 || page > num_pages {
            return Err(EgraError::PageOutOfRange { page, num_pages });
        }
    }

    let mut non_evidence: Vec<u32> =
        (1..=num_pages).filter(|p| !evidence_pages.contains(p)).collect();
    let lo_count =
        (cfg.downsample_fraction * non_evidence.len() as f64).round_ties_even() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    non_evidence.shuffle(&mut rng);

    let mut budgets = vec![cfg.hi_budget; num_pages as usize];
    for &page in non_evidence.iter().take(lo_count) {
        budgets[(page - 1) as usize] = cfg.lo_budget;
    }

    let total_visual_tokens = budgets.iter().map(|&b| u64::from(b)).sum();
    let mut plan = ResolutionPlan {
        budgets,
        evidence_pages: evidence_pages.clone(),
        seed,
        total_visual_tokens,
        total_sequence_tokens: 0,
    };
    plan.total_sequence_tokens = sequence_length(&plan, cfg);
    Ok(plan)
}

/// Length of the assembled input sequence:
/// `question_tokens + sum_i (page_id_overhead + budget_i)`.
pub fn sequence_length(plan: &ResolutionPlan, cfg: &EgraConfig) -> u64 {
    u64::from(cfg.question_tokens)
        + plan
            .budgets
            .iter()
            .map(|&b| u64::from(cfg.page_id_overhead) + u64::from(b))
            .sum::<u64>()
}

/// Visual-token count of a page rendered at native resolution, assuming
/// square token cells of side `px_per_token`:
/// `ceil(width / side) * ceil(height / side)`. Reporting-only.
pub fn inference_budget(width_px: u32, height_px: u32, px_per_token: u32) -> Result<u64, EgraError> {
    if width_px == 0 || height_px == 0 || px_per_token == 0 {
        return Err(EgraError::ZeroDimension);
    }
    Ok(u64::from(width_px.div_ceil(px_per_token)) * u64::from(height_px.div_ceil(px_per_token)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pages(items: &[u32]) -> BTreeSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn splits_non_evidence_seventy_thirty() {
        let plan = allocate(11, &pages(&[1]), &EgraConfig::default(), 42).unwrap();
        assert_eq!(plan.budget_of(1), Some(1024));
        let lo = plan.budgets.iter().filter(|&&b| b == 256).count();
        let hi = plan.budgets.iter().filter(|&&b| b == 1024).count();
        assert_eq!((lo, hi), (7, 4));
    }

    #[test]
    fn all_evidence_stays_high() {
        let plan = allocate(3, &pages(&[1, 2, 3]), &EgraConfig::default(), 7).unwrap();
        assert_eq!(plan.budgets, vec![1024, 1024, 1024]);
        assert_eq!(plan.total_visual_tokens, 3 * 1024);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = allocate(40, &pages(&[3, 9]), &EgraConfig::default(), 123).unwrap();
        let b = allocate(40, &pages(&[3, 9]), &EgraConfig::default(), 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_reach_different_subsets() {
        let mut distinct = BTreeSet::new();
        for seed in 0..100 {
            let plan = allocate(40, &pages(&[1, 2]), &EgraConfig::default(), seed).unwrap();
            let lo_set: Vec<u32> = (1..=40).filter(|&p| plan.budget_of(p) == Some(256)).collect();
            distinct.insert(lo_set);
        }
        assert!(distinct.len() >= 2, "allocation never varied across seeds");
    }

    #[test]
    fn rejects_out_of_range_evidence() {
        let err = allocate(5, &pages(&[6]), &EgraConfig::default(), 0).unwrap_err();
        assert_eq!(err, EgraError::PageOutOfRange { page: 6, num_pages: 5 });
        assert_eq!(
            allocate(0, &pages(&[]), &EgraConfig::default(), 0).unwrap_err(),
            EgraError::NoPages
        );
    }

    #[test]
    fn rounds_half_to_even() {
        // 5 non-evidence pages at fraction 0.5 -> 2.5 -> 2
        let cfg = EgraConfig { downsample_fraction: 0.5, ..EgraConfig::default() };
        let plan = allocate(5, &pages(&[]), &cfg, 1).unwrap();
        assert_eq!(plan.budgets.iter().filter(|&&b| b == 256).count(), 2);
        // 3 non-evidence pages at 0.5 -> 1.5 -> 2
        let plan = allocate(3, &pages(&[]), &cfg, 1).unwrap();
        assert_eq!(plan.budgets.iter().filter(|&&b| b == 256).count(), 2);
    }

    #[test]
    fn sequence_length_sums_overheads_and_budgets() {
        let cfg = EgraConfig { question_tokens: 20, ..EgraConfig::default() };
        let plan = allocate(1, &pages(&[1]), &cfg, 0).unwrap();
        assert_eq!(sequence_length(&plan, &cfg), 20 + 3 + 1024);
        assert_eq!(plan.total_sequence_tokens, 1047);
    }

    #[test]
    fn sequence_length_eleven_page_example() {
        let cfg = EgraConfig::default();
        let plan = allocate(11, &pages(&[1]), &cfg, 5).unwrap();
        // 7 low + 4 high pages, 3 tokens of page-id overhead each, no question
        assert_eq!(plan.total_sequence_tokens, 3 * 11 + 7 * 256 + 4 * 1024);
        assert_eq!(plan.total_sequence_tokens, 5921);
    }

    #[test]
    fn single_low_page_minimal_sequence() {
        let cfg = EgraConfig { downsample_fraction: 1.0, page_id_overhead: 0, ..EgraConfig::default() };
        let plan = allocate(1, &pages(&[]), &cfg, 9).unwrap();
        assert_eq!(plan.budgets, vec![256]);
        assert_eq!(plan.total_sequence_tokens, 256);
    }

    #[test]
    fn inference_budget_examples() {
        assert_eq!(inference_budget(1024, 784, 56).unwrap(), 19 * 14);
        assert_eq!(inference_budget(56, 56, 56).unwrap(), 1);
        assert_eq!(inference_budget(57, 56, 56).unwrap(), 2);
        assert_eq!(inference_budget(0, 56, 56).unwrap_err(), EgraError::ZeroDimension);
    }

    #[test]
    fn config_validation() {
        let bad = EgraConfig { hi_budget: 256, lo_budget: 256, ..EgraConfig::default() };
        assert!(matches!(bad.validate(), Err(EgraError::BadBudgets { .. })));
        let bad = EgraConfig { downsample_fraction: 1.2, ..EgraConfig::default() };
        assert!(matches!(bad.validate(), Err(EgraError::BadFraction(_))));
    }
}
