//! Benchmark metrics over prediction records: mean ANLS, accuracy,
//! micro-averaged evidence precision/recall/F-beta, the 2x2 stage-wise error
//! breakdown, retrieval top-k sweeps, and the length-truncation protocol.

use crate::normalize::normalize_answer;
use crate::reward::{anls_score, fbeta, GroundTruth};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no records to evaluate")]
    EmptyRecords,
    #[error("no k values for the retrieval sweep")]
    EmptyKs,
    #[error("record `{0}` has empty ground-truth evidence; the breakdown needs evidence labels")]
    EmptyEvidence(String),
    #[error("record `{sample_id}` cites page {page} outside 1..={num_pages}")]
    PageOutOfRange { sample_id: String, page: u32, num_pages: u32 },
    #[error("target length {target} infeasible: need {min_len}..={num_pages}")]
    InfeasibleTarget { target: u32, min_len: u32, num_pages: u32 },
}

/// One scored prediction joined with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub pred_answer: String,
    pub pred_pages: BTreeSet<u32>,
    pub gt: GroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_num_pages: Option<u32>,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if let Some(num_pages) = self.doc_num_pages {
            for &page in self.pred_pages.iter().chain(self.gt.evidence_pages.iter()) {
                if page < 1 || page > num_pages {
                    return Err(EvalError::PageOutOfRange {
                        sample_id: self.sample_id.clone(),
                        page,
                        num_pages,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-sample retriever relevance scores, higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub sample_id: String,
    pub scores: BTreeMap<u32, f64>,
}

/// Mean ANLS over records.
pub fn metric_anls<F: Scalar>(records: &[EvalRecord], tau: F) -> Result<F, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let sum = records
        .iter()
        .fold(F::zero(), |s, r| s + anls_score(&r.pred_answer, &r.gt.answers, tau));
    Ok(sum / F::from_count(records.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// ANLS (tau = 0.5) at least 0.5.
    Relaxed,
    /// Normalized exact match against any acceptable answer.
    Strict,
}

/// Fraction of records counted correct under the given mode.
pub fn metric_accuracy<F: Scalar>(records: &[EvalRecord], mode: AccuracyMode) -> Result<F, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let half = F::from_f64(0.5).unwrap();
    let hits = records
        .iter()
        .filter(|r| match mode {
            AccuracyMode::Relaxed => anls_score::<F, _>(&r.pred_answer, &r.gt.answers, half) >= half,
            AccuracyMode::Strict => {
                let pred = normalize_answer(&r.pred_answer);
                r.gt.answers.iter().any(|a| normalize_answer(a) == pred)
            }
        })
        .count();
    Ok(F::from_count(hits) / F::from_count(records.len()))
}

/// Mean over records of the best bag-of-tokens F1 between the normalized
/// prediction and any normalized acceptable answer.
pub fn metric_token_f1<F: Scalar>(records: &[EvalRecord]) -> Result<F, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let sum = records.iter().fold(F::zero(), |s, r| {
        let pred = token_counts(&r.pred_answer);
        let best = r
            .gt
            .answers
            .iter()
            .map(|a| token_f1::<F>(&pred, &token_counts(a)))
            .fold(F::zero(), F::max);
        s + best
    });
    Ok(sum / F::from_count(records.len()))
}

fn token_counts(s: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for token in normalize_answer(s).split_whitespace() {
        *counts.entry(token.to_string()).or_insert(0) += 1;
    }
    counts
}

fn token_f1<F: Scalar>(pred: &HashMap<String, usize>, gt: &HashMap<String, usize>) -> F {
    let pred_total: usize = pred.values().sum();
    let gt_total: usize = gt.values().sum();
    if pred_total == 0 && gt_total == 0 {
        return F::one();
    }
    if pred_total == 0 || gt_total == 0 {
        return F::zero();
    }
    let overlap: usize =
        pred.iter().map(|(t, &c)| c.min(gt.get(t).copied().unwrap_or(0))).sum();
    if overlap == 0 {
        return F::zero();
    }
    let p = F::from_count(overlap) / F::from_count(pred_total);
    let r = F::from_count(overlap) / F::from_count(gt_total);
    fbeta(p, r, F::one())
}

/// Micro-averaged evidence precision, recall, and F-beta: counts are summed
/// over records before the ratios are taken.
pub fn evidence_prf<F: Scalar>(records: &[EvalRecord], beta: F) -> Result<(F, F, F), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut inter = 0usize;
    let mut pred_total = 0usize;
    let mut gt_total = 0usize;
    for r in records {
        inter += r.pred_pages.intersection(&r.gt.evidence_pages).count();
        pred_total += r.pred_pages.len();
        gt_total += r.gt.evidence_pages.len();
    }
    let (p, r) = micro_ratios(inter, pred_total, gt_total);
    Ok((p, r, fbeta(p, r, beta)))
}

fn micro_ratios<F: Scalar>(inter: usize, pred_total: usize, gt_total: usize) -> (F, F) {
    let ratio = |num: usize, den: usize, other_den: usize| {
        if den > 0 {
            F::from_count(num) / F::from_count(den)
        } else if other_den == 0 {
            F::one()
        } else {
            F::zero()
        }
    };
    (ratio(inter, pred_total, gt_total), ratio(inter, gt_total, pred_total))
}

/// The 2x2 stage-wise error table: rows split on evidence recall
/// (complete vs. incomplete), columns on answer ANLS (at least 0.5 vs.
/// below). Marginals and the total are stored alongside the cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub recall_full_acc_high: usize,
    pub recall_full_acc_low: usize,
    pub recall_partial_acc_high: usize,
    pub recall_partial_acc_low: usize,
    pub recall_full_total: usize,
    pub recall_partial_total: usize,
    pub acc_high_total: usize,
    pub acc_low_total: usize,
    pub total: usize,
}

impl BreakdownTable {
    pub fn from_cells(
        recall_full_acc_high: usize,
        recall_full_acc_low: usize,
        recall_partial_acc_high: usize,
        recall_partial_acc_low: usize,
    ) -> Self {
        BreakdownTable {
            recall_full_acc_high,
            recall_full_acc_low,
            recall_partial_acc_high,
            recall_partial_acc_low,
            recall_full_total: recall_full_acc_high + recall_full_acc_low,
            recall_partial_total: recall_partial_acc_high + recall_partial_acc_low,
            acc_high_total: recall_full_acc_high + recall_partial_acc_high,
            acc_low_total: recall_full_acc_low + recall_partial_acc_low,
            total: recall_full_acc_high
                + recall_full_acc_low
                + recall_partial_acc_high
                + recall_partial_acc_low,
        }
    }

    /// Aligned text rendering of the table.
    pub fn render_text(&self) -> String {
        let rows = [
            ("Recall=1", self.recall_full_acc_high, self.recall_full_acc_low, self.recall_full_total),
            (
                "Recall<1",
                self.recall_partial_acc_high,
                self.recall_partial_acc_low,
                self.recall_partial_total,
            ),
            ("Total", self.acc_high_total, self.acc_low_total, self.total),
        ];
        let mut out = format!("{:<10} {:>10} {:>10} {:>10}\n", "", "Acc>=0.5", "Acc<0.5", "Total");
        for (label, hi, lo, total) in rows {
            out.push_str(&format!("{label:<10} {hi:>10} {lo:>10} {total:>10}\n"));
        }
        out
    }
}

/// Buckets every record by (evidence recall = 1) x (ANLS >= 0.5). Scores
/// strictly between 0 and 0.5 land in the low-accuracy column so the two
/// columns partition the records. Requires non-empty evidence labels.
pub fn error_breakdown(records: &[EvalRecord]) -> Result<BreakdownTable, EvalError> {
    let mut cells = [0usize; 4];
    for r in records {
        if r.gt.evidence_pages.is_empty() {
            return Err(EvalError::EmptyEvidence(r.sample_id.clone()));
        }
        let inter = r.pred_pages.intersection(&r.gt.evidence_pages).count();
        let full_recall = inter == r.gt.evidence_pages.len();
        let acc_high = anls_score::<f64, _>(&r.pred_answer, &r.gt.answers, 0.5) >= 0.5;
        let idx = match (full_recall, acc_high) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        cells[idx] += 1;
    }
    Ok(BreakdownTable::from_cells(cells[0], cells[1], cells[2], cells[3]))
}

/// The `k` highest-scoring pages, score-descending, ties broken by ascending
/// page id; all pages when `k` exceeds the number scored.
pub fn rag_topk(scores: &RetrievalScores, k: usize) -> Vec<u32> {
    let mut ranked: Vec<(u32, f64)> = scores.scores.iter().map(|(&p, &s)| (p, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked.into_iter().map(|(p, _)| p).collect()
}

/// One row of the retrieval sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RagSweepRow<F> {
    pub k: usize,
    pub precision: F,
    pub recall: F,
    pub f1: F,
}

/// Micro retrieval precision/recall/F1 for each `k`, in input order. The
/// precision denominator uses `min(k, |scored pages|)` per sample so short
/// documents do not deflate it.
pub fn rag_sweep<F: Scalar>(
    samples: &[(RetrievalScores, BTreeSet<u32>)],
    ks: &[usize],
) -> Result<Vec<RagSweepRow<F>>, EvalError> {
    if ks.is_empty() {
        return Err(EvalError::EmptyKs);
    }
    if samples.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut inter = 0usize;
        let mut retrieved = 0usize;
        let mut gt_total = 0usize;
        for (scores, gt) in samples {
            let topk = rag_topk(scores, k);
            inter += topk.iter().filter(|p| gt.contains(p)).count();
            retrieved += k.min(scores.scores.len());
            gt_total += gt.len();
        }
        let (precision, recall) = micro_ratios(inter, retrieved, gt_total);
        rows.push(RagSweepRow { k, precision, recall, f1: fbeta(precision, recall, F::one()) });
    }
    Ok(rows)
}

/// Picks a fixed-length page subset that always contains the evidence pages:
/// the remainder is sampled uniformly (seeded) from the non-evidence pages.
/// Returned ascending; deterministic per seed, and for a fixed seed the
/// selections are nested as `target_len` grows.
pub fn length_truncate(
    doc_num_pages: u32,
    gt_pages: &BTreeSet<u32>,
    target_len: u32,
    seed: u64,
) -> Result<Vec<u32>, EvalError> {
    for &page in gt_pages {
        if page < 1 || page > doc_num_pages {
            return Err(EvalError::PageOutOfRange {
                sample_id: String::new(),
                page,
                num_pages: doc_num_pages,
            });
        }
    }
    let min_len = gt_pages.len() as u32;
    if target_len < min_len || target_len > doc_num_pages {
        return Err(EvalError::InfeasibleTarget { target: target_len, min_len, num_pages: doc_num_pages });
    }
    let mut non_evidence: Vec<u32> =
        (1..=doc_num_pages).filter(|p| !gt_pages.contains(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    non_evidence.shuffle(&mut rng);
    let mut pages: Vec<u32> = gt_pages.iter().copied().collect();
    pages.extend(non_evidence.into_iter().take((target_len - min_len) as usize));
    pages.sort_unstable();
    Ok(pages)
}
