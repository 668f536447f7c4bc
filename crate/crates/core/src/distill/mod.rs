//! Distillation data pipeline: build minimal-context teacher requests, call
//! a teacher endpoint, and verify each completion in two stages — an exact
//! match against the ground truth first, then a semantic judge for the
//! near-misses. Accepted records carry a final label; everything else is
//! rejected with a reason. External calls run with bounded concurrency and
//! records are emitted in input order.

mod client;
mod templates;

pub use client::{
    call_with_retry, FnJudge, FnTeacher, JudgeClient, RetryPolicy, TeacherClient, TransportError,
};
pub use templates::{
    build_judge_prompt, sha256_hex, template_for, template_sha256, ALR_TEMPLATE, JUDGE_TEMPLATE,
    VANILLA_TEMPLATE,
};

use crate::grammar::{parse_alr, parse_vanilla, AlrResponse, Diagnostic, ParseOutcome};
use crate::normalize::normalize_answer;
use crate::reward::GroundTruth;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("ground-truth page {page} out of range 1..={num_pages}")]
    PageOutOfRange { page: u32, num_pages: u32 },
    #[error("task `{sample_id}`: {problem}")]
    InvalidTask { sample_id: String, problem: String },
    #[error("record sink: {0}")]
    Io(#[from] std::io::Error),
    #[error("record serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Which instruction template a task uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Alr,
    Vanilla,
}

/// One page handed to the teacher: its 1-based id and the image location.
/// Paths are carried as opaque strings; pixels never enter the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPage {
    pub page_id: u32,
    pub image_path: String,
}

/// One distillation unit: a question over a document, its label, and the
/// minimal context the teacher will see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillTask {
    pub sample_id: String,
    pub question: String,
    pub doc_id: String,
    pub doc_num_pages: u32,
    pub gt: GroundTruth,
    pub context_pages: Vec<ContextPage>,
    pub prompt_kind: PromptKind,
}

impl DistillTask {
    /// Context must cover every evidence page, stay in range, and not repeat
    /// pages.
    pub fn validate(&self) -> Result<(), DistillError> {
        let invalid = |problem: String| DistillError::InvalidTask {
            sample_id: self.sample_id.clone(),
            problem,
        };
        self.gt.validate().map_err(|e| invalid(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for page in &self.context_pages {
            if page.page_id < 1 || page.page_id > self.doc_num_pages {
                return Err(invalid(format!(
                    "context page {} out of range 1..={}",
                    page.page_id, self.doc_num_pages
                )));
            }
            if !seen.insert(page.page_id) {
                return Err(invalid(format!("duplicate context page {}", page.page_id)));
            }
        }
        for &page in &self.gt.evidence_pages {
            if page > self.doc_num_pages {
                return Err(invalid(format!(
                    "evidence page {page} out of range 1..={}",
                    self.doc_num_pages
                )));
            }
            if !seen.contains(&page) {
                return Err(invalid(format!("context is missing evidence page {page}")));
            }
        }
        Ok(())
    }
}

/// Teacher request payload: the instruction block (the template asset,
/// byte for byte), the user text naming the question and page ids, and the
/// page images in context order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherRequest {
    pub instruction: String,
    pub user_text: String,
    pub images: Vec<ContextPage>,
}

/// Verification outcome for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Answer and evidence pages matched the label exactly.
    EmPass,
    /// Judge confirmed the label after an exact-match miss.
    JudgePass,
    /// Judge accepted the sample with a label that differs from the stored
    /// ground truth (the corrected label replaces it).
    JudgeCorrected,
    Rejected,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        self != Verdict::Rejected
    }
}

/// Accepted label: the answer string and the evidence pages, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalLabel {
    pub answer: String,
    pub evidence_pages: Vec<u32>,
}

/// One task's trip through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub task: DistillTask,
    pub teacher_raw: String,
    pub parsed: ParseOutcome,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_label: Option<FinalLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

/// Counts per verdict plus the acceptance rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillSummary {
    pub total: usize,
    pub em_pass: usize,
    pub judge_pass: usize,
    pub judge_corrected: usize,
    pub rejected: usize,
    pub pass_rate: f64,
}

/// Pipeline knobs: worker count for external calls and the retry policy.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { concurrency: 8, retry: RetryPolicy::default() }
    }
}

/// Picks the minimal-context page set: all evidence pages plus up to
/// `n_distractors` non-evidence pages sampled uniformly without replacement
/// (seeded). Ascending page ids, original numbering preserved.
pub fn build_minimal_context(
    doc_num_pages: u32,
    gt_pages: &BTreeSet<u32>,
    n_distractors: usize,
    seed: u64,
) -> Result<Vec<u32>, DistillError> {
    for &page in gt_pages {
        if page < 1 || page > doc_num_pages {
            return Err(DistillError::PageOutOfRange { page, num_pages: doc_num_pages });
        }
    }
    let mut non_evidence: Vec<u32> =
        (1..=doc_num_pages).filter(|p| !gt_pages.contains(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    non_evidence.shuffle(&mut rng);
    let take = n_distractors.min(non_evidence.len());
    let mut pages: Vec<u32> = gt_pages.iter().copied().collect();
    pages.extend(non_evidence.into_iter().take(take));
    pages.sort_unstable();
    Ok(pages)
}

/// Stable per-task seed derivation (splitmix64 of the master seed and the
/// task index), so a fixed master seed reproduces every task's context.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the deterministic teacher payload for a task.
pub fn make_teacher_request(task: &DistillTask) -> Result<TeacherRequest, DistillError> {
    task.validate()?;
    let ids = task
        .context_pages
        .iter()
        .map(|p| p.page_id.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    Ok(TeacherRequest {
        instruction: template_for(task.prompt_kind).to_string(),
        user_text: format!("Question: {}\nDocument Page Number: [{}]", task.question, ids),
        images: task.context_pages.clone(),
    })
}

/// Exact-match check: the normalized final answer equals any normalized
/// acceptable answer AND the cited pages equal the ground-truth pages as
/// sets.
pub fn em_verify(parsed: &AlrResponse, gt: &GroundTruth) -> bool {
    if parsed.page_set() != gt.evidence_pages {
        return false;
    }
    let pred = normalize_answer(&parsed.final_answer);
    gt.answers.iter().any(|a| normalize_answer(a) == pred)
}

/// Judge outcome: an accepted (possibly corrected) answer string, or a
/// rejection reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeOutcome {
    Accepted(String),
    Rejected(String),
}

/// Sends the filled judge prompt and maps the reply: the exact line `Error`
/// rejects, any other non-empty line is the corrected answer. Transport
/// failures reject after bounded retries.
pub fn judge_verify(
    question: &str,
    response_answer: &str,
    gt_answer: &str,
    judge: &dyn JudgeClient,
    retry: &RetryPolicy,
) -> JudgeOutcome {
    let prompt = build_judge_prompt(question, response_answer, gt_answer);
    match call_with_retry(retry, || judge.judge(&prompt)) {
        Err(e) => JudgeOutcome::Rejected(e.to_string()),
        Ok(raw) => {
            let line = raw.trim();
            if line == "Error" {
                JudgeOutcome::Rejected("judge returned \"Error\"".into())
            } else if line.is_empty() {
                JudgeOutcome::Rejected("judge returned empty output".into())
            } else {
                JudgeOutcome::Accepted(line.to_string())
            }
        }
    }
}

/// Runs every task through teacher -> parse -> exact match -> judge, writes
/// one JSON record per line in input order, and returns the verdict counts.
/// Per-task failures become rejected records; the stream never aborts.
pub fn run_pipeline(
    tasks: &[DistillTask],
    teacher: &dyn TeacherClient,
    judge: &dyn JudgeClient,
    out: &mut dyn Write,
    opts: &PipelineOptions,
) -> Result<DistillSummary, DistillError> {
    let records = process_all(tasks, teacher, judge, opts);
    let mut summary =
        DistillSummary { total: records.len(), em_pass: 0, judge_pass: 0, judge_corrected: 0, rejected: 0, pass_rate: 0.0 };
    for record in &records {
        match record.verdict {
            Verdict::EmPass => summary.em_pass += 1,
            Verdict::JudgePass => summary.judge_pass += 1,
            Verdict::JudgeCorrected => summary.judge_corrected += 1,
            Verdict::Rejected => summary.rejected += 1,
        }
        let line = serde_json::to_string(record)?;
        writeln!(out, "{line}")?;
    }
    if summary.total > 0 {
        summary.pass_rate =
            (summary.em_pass + summary.judge_pass + summary.judge_corrected) as f64 / summary.total as f64;
    }
    Ok(summary)
}

fn process_all(
    tasks: &[DistillTask],
    teacher: &dyn TeacherClient,
    judge: &dyn JudgeClient,
    opts: &PipelineOptions,
) -> Vec<DistillRecord> {
    let workers = opts.concurrency.max(1).min(tasks.len().max(1));
    if workers <= 1 {
        return tasks.iter().map(|t| process_task(t, teacher, judge, &opts.retry)).collect();
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, DistillRecord)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= tasks.len() {
                    break;
                }
                let record = process_task(&tasks[idx], teacher, judge, &opts.retry);
                if tx.send((idx, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut slots: Vec<Option<DistillRecord>> = (0..tasks.len()).map(|_| None).collect();
        for (idx, record) in rx {
            slots[idx] = Some(record);
        }
        slots.into_iter().map(|s| s.expect("every task produces a record")).collect()
    })
}

fn process_task(
    task: &DistillTask,
    teacher: &dyn TeacherClient,
    judge: &dyn JudgeClient,
    retry: &RetryPolicy,
) -> DistillRecord {
    let rejected = |teacher_raw: String, parsed: ParseOutcome, reason: String| DistillRecord {
        task: task.clone(),
        teacher_raw,
        parsed,
        verdict: Verdict::Rejected,
        final_label: None,
        judge_output: None,
        rejection_reason: Some(reason),
    };
    let unavailable = |reason: String| {
        ParseOutcome::malformed(vec![Diagnostic { offset: 0, message: reason }])
    };

    let request = match make_teacher_request(task) {
        Ok(r) => r,
        Err(e) => return rejected(String::new(), unavailable("no teacher output".into()), e.to_string()),
    };
    let raw = match call_with_retry(retry, || teacher.generate(&request)) {
        Ok(raw) => raw,
        Err(e) => return rejected(String::new(), unavailable("no teacher output".into()), e.to_string()),
    };

    let parsed = match task.prompt_kind {
        PromptKind::Alr => parse_alr(&raw),
        PromptKind::Vanilla => parse_vanilla(&raw),
    };
    let response = match &parsed.response {
        Some(r) => r.clone(),
        None => return rejected(raw, parsed.clone(), "teacher output failed to parse".into()),
    };

    let em_ok = match task.prompt_kind {
        PromptKind::Alr => em_verify(&response, &task.gt),
        // Free-form completions cite no pages; only the answer is checked.
        PromptKind::Vanilla => {
            let pred = normalize_answer(&response.final_answer);
            task.gt.answers.iter().any(|a| normalize_answer(a) == pred)
        }
    };
    let gt_pages: Vec<u32> = task.gt.evidence_pages.iter().copied().collect();
    if em_ok {
        return DistillRecord {
            task: task.clone(),
            teacher_raw: raw,
            parsed,
            verdict: Verdict::EmPass,
            final_label: Some(FinalLabel {
                answer: response.final_answer.clone(),
                evidence_pages: gt_pages,
            }),
            judge_output: None,
            rejection_reason: None,
        };
    }

    let gt_answer = task.gt.answers.first().map(String::as_str).unwrap_or_default();
    match judge_verify(&task.question, &response.final_answer, gt_answer, judge, retry) {
        JudgeOutcome::Rejected(reason) => {
            let mut record = rejected(raw, parsed, reason);
            record.judge_output = Some("Error".into());
            record
        }
        JudgeOutcome::Accepted(label) => {
            let confirms_gt = task
                .gt
                .answers
                .iter()
                .any(|a| normalize_answer(a) == normalize_answer(&label));
            DistillRecord {
                task: task.clone(),
                teacher_raw: raw,
                parsed,
                verdict: if confirms_gt { Verdict::JudgePass } else { Verdict::JudgeCorrected },
                final_label: Some(FinalLabel { answer: label.clone(), evidence_pages: gt_pages }),
                judge_output: Some(label),
                rejection_reason: None,
            }
        }
    }
}
