//! Command-line surface. Every subcommand reads and writes the JSONL/CSV
//! formats documented in the README; exit codes are 0 on success, 2 on
//! validation failure, 3 on transport failure.

use crate::config::WeightsSpec;
use alr_core::distill::PromptKind;
use alr_core::eval::AccuracyMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "alr", version, about = "Structured-output scoring, rewards, and evaluation for page-grounded document QA")]
pub struct Cli {
    /// Key-value config file supplying defaults (flags override it; ALR_*
    /// environment variables rank below it).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse one raw model output against the strict template.
    Parse(ParseArgs),
    /// Score raw rollouts against ground truth, one reward breakdown per line.
    Score(ScoreArgs),
    /// Standardize reward groups into advantages with the spread filter.
    Advantages(AdvantagesArgs),
    /// Build a per-page token-budget plan for one document.
    Allocate(AllocateArgs),
    /// Run the distillation pipeline over a task file.
    Distill(DistillArgs),
    /// Corpus metrics over prediction/ground-truth files.
    Eval(EvalArgs),
    /// The 2x2 recall/accuracy error table.
    Breakdown(BreakdownArgs),
    /// Retrieval precision/recall/F1 across top-k cutoffs (CSV).
    RagSweep(RagSweepArgs),
    /// Evidence-preserving page subsets at several target lengths.
    LengthSweep(LengthSweepArgs),
    /// Run the reward service (HTTP, or line-oriented stdio with --stdio).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Raw text file (`-` for stdin).
    pub file: String,
    /// Tolerate text surrounding the <think>/<answer> blocks.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Ground-truth JSONL: {sample_id, answers, evidence_pages}.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSONL: {sample_id, response}.
    #[arg(long)]
    pub pred: PathBuf,
    /// Component weights as `format,evidence,answer`.
    #[arg(long)]
    pub weights: Option<WeightsSpec>,
    /// Evidence F-beta recall weighting.
    #[arg(long)]
    pub beta: Option<f64>,
    /// ANLS acceptance threshold.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AdvantagesArgs {
    /// Reward-group JSONL: {question_id?, rewards}.
    #[arg(long)]
    pub groups: PathBuf,
    /// Standardization guard added to the reward std.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Reward-spread tolerance of the zero-advantage filter.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    /// Number of document pages.
    #[arg(long)]
    pub pages: u32,
    /// Evidence page ids, comma-separated (e.g. `1,4`).
    #[arg(long, default_value = "")]
    pub evidence: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of non-evidence pages downsampled to the low budget.
    #[arg(long, default_value_t = 0.7)]
    pub fraction: f64,
    /// High (evidence) token budget per page.
    #[arg(long, default_value_t = 1024)]
    pub hi: u32,
    /// Low (downsampled) token budget per page.
    #[arg(long, default_value_t = 256)]
    pub lo: u32,
    /// Tokens consumed by each textual page identifier.
    #[arg(long, default_value_t = 3)]
    pub overhead: u32,
    /// Tokens consumed by the question text.
    #[arg(long, default_value_t = 0)]
    pub question_tokens: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PromptKindArg {
    Alr,
    Vanilla,
}

impl From<PromptKindArg> for PromptKind {
    fn from(v: PromptKindArg) -> Self {
        match v {
            PromptKindArg::Alr => PromptKind::Alr,
            PromptKindArg::Vanilla => PromptKind::Vanilla,
        }
    }
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Task JSONL: {sample_id, question, doc_id, doc_num_pages, answers,
    /// evidence_pages, page_paths}.
    #[arg(long)]
    pub tasks: PathBuf,
    /// Output record JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Instruction template to use.
    #[arg(long, value_enum, default_value_t = PromptKindArg::Alr)]
    pub prompt: PromptKindArg,
    /// Distractor pages added to each minimal context.
    #[arg(long, default_value_t = 2)]
    pub distractors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Concurrent in-flight external calls.
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
    /// Use built-in offline stub clients instead of TEACHER_URL/JUDGE_URL.
    #[arg(long)]
    pub stub: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Anls,
    Acc,
    Prf,
    TokenF1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Relaxed,
    Strict,
}

impl From<ModeArg> for AccuracyMode {
    fn from(v: ModeArg) -> Self {
        match v {
            ModeArg::Relaxed => AccuracyMode::Relaxed,
            ModeArg::Strict => AccuracyMode::Strict,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction JSONL: {sample_id, answer, evidence_pages}.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth JSONL.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// F-beta weighting for --metric prf.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Correctness mode for --metric acc.
    #[arg(long, value_enum, default_value_t = ModeArg::Relaxed)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct BreakdownArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct RagSweepArgs {
    /// Retriever score JSONL: {sample_id, scores: {"page": score}}.
    #[arg(long)]
    pub scores: PathBuf,
    /// Ground-truth JSONL (evidence pages per sample).
    #[arg(long)]
    pub gt: PathBuf,
    /// Comma-separated top-k cutoffs, e.g. `1,2,5,10,20`.
    #[arg(long)]
    pub ks: String,
}

#[derive(Debug, Args)]
pub struct LengthSweepArgs {
    #[arg(long)]
    pub doc_pages: u32,
    /// Evidence page ids, comma-separated.
    #[arg(long, default_value = "")]
    pub evidence: String,
    /// Comma-separated context lengths.
    #[arg(long)]
    pub targets: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Bind address, e.g. `127.0.0.1:8787` (port 0 picks one).
    #[arg(long)]
    pub bind: Option<String>,
    /// Speak the line-oriented JSON protocol on stdin/stdout instead of HTTP.
    #[arg(long)]
    pub stdio: bool,
    #[arg(long)]
    pub weights: Option<WeightsSpec>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_batch: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}
