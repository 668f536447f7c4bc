//! JSONL input schemas and readers shared by the subcommands. All inputs are
//! one JSON object per line; ground truth and predictions join on
//! `sample_id`.

use crate::error::{CliError, CliResult};
use alr_core::reward::GroundTruth;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

/// Ground-truth line: acceptable answers and evidence pages per sample.
#[derive(Debug, Clone, Deserialize)]
pub struct GtRow {
    pub sample_id: String,
    pub answers: Vec<String>,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
    #[serde(default)]
    pub doc_num_pages: Option<u32>,
}

/// Raw rollout line for `score`: the unparsed model output.
#[derive(Debug, Clone, Deserialize)]
pub struct ResponseRow {
    pub sample_id: String,
    pub response: String,
}

/// Parsed prediction line for `eval`/`breakdown`.
#[derive(Debug, Clone, Deserialize)]
pub struct PredRow {
    pub sample_id: String,
    pub answer: String,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
}

/// Retriever score line: page id -> relevance (JSON object keys are page
/// numbers as strings).
#[derive(Debug, Clone, Deserialize)]
pub struct ScoresRow {
    pub sample_id: String,
    pub scores: BTreeMap<String, f64>,
}

/// Reward group line for `advantages`.
#[derive(Debug, Clone, Deserialize)]
pub struct RewardsRow {
    #[serde(default)]
    pub question_id: Option<String>,
    pub rewards: Vec<f64>,
}

/// Distillation task line.
#[derive(Debug, Clone, Deserialize)]
pub struct TaskRow {
    pub sample_id: String,
    pub question: String,
    pub doc_id: String,
    pub doc_num_pages: u32,
    pub answers: Vec<String>,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
    pub page_paths: Vec<String>,
}

/// Reads a whole file (or stdin for `-`) into a string.
pub fn read_text(path: &str) -> CliResult<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("{path}: {e}")))
    }
}

/// Reads one JSON value per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| {
            CliError::validation(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Validated ground truth plus the optional page count, keyed by sample id.
pub struct GtEntry {
    pub gt: GroundTruth,
    pub doc_num_pages: Option<u32>,
}

pub fn index_ground_truth(rows: Vec<GtRow>) -> CliResult<HashMap<String, GtEntry>> {
    let mut index = HashMap::with_capacity(rows.len());
    for row in rows {
        let gt = GroundTruth::new(row.answers, row.evidence_pages.iter().copied())
            .map_err(|e| CliError::validation(format!("sample `{}`: {e}", row.sample_id)))?;
        let entry = GtEntry { gt, doc_num_pages: row.doc_num_pages };
        if index.insert(row.sample_id.clone(), entry).is_some() {
            return Err(CliError::validation(format!(
                "duplicate ground-truth sample_id `{}`",
                row.sample_id
            )));
        }
    }
    Ok(index)
}

/// Parses the string-keyed score map into numeric page ids, rejecting
/// non-finite scores.
pub fn parse_scores(row: &ScoresRow) -> CliResult<BTreeMap<u32, f64>> {
    let mut scores = BTreeMap::new();
    for (key, &value) in &row.scores {
        let page: u32 = key.parse().map_err(|_| {
            CliError::validation(format!("sample `{}`: bad page id `{key}`", row.sample_id))
        })?;
        if page < 1 {
            return Err(CliError::validation(format!(
                "sample `{}`: page ids are 1-based",
                row.sample_id
            )));
        }
        if !value.is_finite() {
            return Err(CliError::validation(format!(
                "sample `{}`: non-finite score for page {page}",
                row.sample_id
            )));
        }
        scores.insert(page, value);
    }
    Ok(scores)
}

/// Comma-separated positive integer list (`1,4,7`); empty string is empty.
pub fn parse_u32_list(raw: &str) -> CliResult<Vec<u32>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|e| CliError::validation(format!("bad list entry `{part}`: {e}")))
        })
        .collect()
}
