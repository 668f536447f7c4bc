//! Subcommand implementations. Each reads/writes the formats documented in
//! the README and reports through the shared error taxonomy.

use crate::args::*;
use crate::config::{Resolver, WeightsSpec};
use crate::error::{CliError, CliResult};
use crate::io::{
    self, GtEntry, GtRow, PredRow, ResponseRow, RewardsRow, ScoresRow, TaskRow,
};
use crate::service::{self, ServiceConfig};
use crate::transport::HttpChatClient;
use alr_core::distill::{
    build_minimal_context, derive_seed, run_pipeline, ContextPage, DistillTask, FnJudge,
    FnTeacher, JudgeClient, PipelineOptions, PromptKind, RetryPolicy, TeacherClient,
};
use alr_core::egra::{allocate, EgraConfig};
use alr_core::eval::{
    error_breakdown, evidence_prf, length_truncate, metric_accuracy, metric_anls,
    metric_token_f1, rag_sweep, EvalRecord, RetrievalScores,
};
use alr_core::grammar::{parse_alr_with, render_alr, AlrResponse, ParseOptions};
use alr_core::grpo::{group_advantages, zero_advantage_filter, RolloutGroup, ScoringConfig};
use alr_core::reward::total_reward;
use alr_core::wire::{canonical_string, round_sig};
use alr_core::{RewardWeights64, DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_SPREAD_TOL, DEFAULT_TAU};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::time::Duration;

pub fn dispatch(cli: Cli) -> CliResult<i32> {
    let resolver = Resolver::load(cli.config.as_deref())?;
    match cli.command {
        Command::Parse(args) => cmd_parse(&args),
        Command::Score(args) => cmd_score(&args, &resolver),
        Command::Advantages(args) => cmd_advantages(&args, &resolver),
        Command::Allocate(args) => cmd_allocate(&args),
        Command::Distill(args) => cmd_distill(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Breakdown(args) => cmd_breakdown(&args),
        Command::RagSweep(args) => cmd_rag_sweep(&args),
        Command::LengthSweep(args) => cmd_length_sweep(&args),
        Command::Serve(args) => cmd_serve(&args, &resolver),
    }
}

fn print_canonical<T: Serialize>(value: &T) -> CliResult<()> {
    println!("{}", canonical_string(value)?);
    Ok(())
}

fn cmd_parse(args: &ParseArgs) -> CliResult<i32> {
    let raw = io::read_text(&args.file)?;
    let outcome = parse_alr_with(&raw, ParseOptions { lenient: args.lenient });
    print_canonical(&outcome)?;
    Ok(if outcome.is_ok() { 0 } else { 2 })
}

fn cmd_score(args: &ScoreArgs, resolver: &Resolver) -> CliResult<i32> {
    let weights = resolver
        .resolve(args.weights, "weights", WeightsSpec(RewardWeights64::default()))?
        .0;
    let beta = resolver.resolve(args.beta, "beta", DEFAULT_BETA)?;
    let tau = resolver.resolve(args.tau, "tau", DEFAULT_TAU)?;
    let gt_index = io::index_ground_truth(io::read_jsonl::<GtRow>(&args.gt)?)?;
    let preds: Vec<ResponseRow> = io::read_jsonl(&args.pred)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for row in &preds {
        let entry = gt_index.get(&row.sample_id).ok_or_else(|| {
            CliError::validation(format!("no ground truth for sample `{}`", row.sample_id))
        })?;
        let breakdown = total_reward(&row.response, &entry.gt, &weights, beta, tau);
        writeln!(out, "{}", canonical_string(&breakdown)?)?;
    }
    Ok(0)
}

fn cmd_advantages(args: &AdvantagesArgs, resolver: &Resolver) -> CliResult<i32> {
    let epsilon = resolver.resolve(args.epsilon, "epsilon", DEFAULT_EPSILON)?;
    let tol = resolver.resolve(args.tol, "tol", DEFAULT_SPREAD_TOL)?;
    let rows: Vec<RewardsRow> = io::read_jsonl(&args.groups)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (idx, row) in rows.into_iter().enumerate() {
        let advantages = group_advantages(&row.rewards, epsilon)
            .map_err(|e| CliError::validation(format!("group {idx}: {e}")))?;
        let group = zero_advantage_filter(
            RolloutGroup {
                question_id: row.question_id.unwrap_or_else(|| idx.to_string()),
                rewards: row.rewards,
                advantages,
                kept: true,
                breakdowns: Vec::new(),
            },
            tol,
        );
        writeln!(out, "{}", canonical_string(&group)?)?;
    }
    Ok(0)
}

fn cmd_allocate(args: &AllocateArgs) -> CliResult<i32> {
    let cfg = EgraConfig {
        hi_budget: args.hi,
        lo_budget: args.lo,
        downsample_fraction: args.fraction,
        page_id_overhead: args.overhead,
        question_tokens: args.question_tokens,
    };
    let evidence: BTreeSet<u32> = io::parse_u32_list(&args.evidence)?.into_iter().collect();
    let plan = allocate(args.pages, &evidence, &cfg, args.seed)
        .map_err(|e| CliError::validation(e.to_string()))?;
    print_canonical(&plan)?;
    Ok(0)
}

fn cmd_distill(args: &DistillArgs) -> CliResult<i32> {
    let kind: PromptKind = args.prompt.into();
    let rows: Vec<TaskRow> = io::read_jsonl(&args.tasks)?;
    let mut tasks = Vec::with_capacity(rows.len());
    for (idx, row) in rows.into_iter().enumerate() {
        if row.page_paths.len() != row.doc_num_pages as usize {
            return Err(CliError::validation(format!(
                "task `{}`: {} page_paths for {} pages",
                row.sample_id,
                row.page_paths.len(),
                row.doc_num_pages
            )));
        }
        let gt = alr_core::reward::GroundTruth::new(row.answers, row.evidence_pages.iter().copied())
            .map_err(|e| CliError::validation(format!("task `{}`: {e}", row.sample_id)))?;
        let context = build_minimal_context(
            row.doc_num_pages,
            &gt.evidence_pages,
            args.distractors,
            derive_seed(args.seed, idx as u64),
        )
        .map_err(|e| CliError::validation(format!("task `{}`: {e}", row.sample_id)))?;
        tasks.push(DistillTask {
            sample_id: row.sample_id,
            question: row.question,
            doc_id: row.doc_id,
            doc_num_pages: row.doc_num_pages,
            gt,
            context_pages: context
                .into_iter()
                .map(|p| ContextPage {
                    page_id: p,
                    image_path: row.page_paths[(p - 1) as usize].clone(),
                })
                .collect(),
            prompt_kind: kind,
        });
    }

    let (teacher, judge, retry): (Box<dyn TeacherClient>, Box<dyn JudgeClient>, RetryPolicy) =
        if args.stub {
            (stub_teacher(&tasks), stub_judge(&tasks), RetryPolicy::immediate(1))
        } else {
            let teacher = HttpChatClient::from_env("TEACHER").map_err(CliError::Validation)?;
            let judge = HttpChatClient::from_env("JUDGE").map_err(CliError::Validation)?;
            (Box::new(teacher), Box::new(judge), RetryPolicy::default())
        };

    let file = std::fs::File::create(&args.out)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.out.display())))?;
    let mut sink = std::io::BufWriter::new(file);
    let opts = PipelineOptions { concurrency: args.concurrency, retry };
    let summary = run_pipeline(&tasks, teacher.as_ref(), judge.as_ref(), &mut sink, &opts)
        .map_err(|e| CliError::validation(e.to_string()))?;
    sink.flush()?;
    print_canonical(&summary)?;

    // Every task failing on transport means the endpoint is down, not that
    // the data was bad; surface that as a transport failure.
    if summary.total > 0 && summary.rejected == summary.total {
        let records = std::fs::read_to_string(&args.out)?;
        let all_transport = records.lines().filter(|l| !l.is_empty()).all(|line| {
            serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| {
                    v["rejection_reason"].as_str().map(|r| r.starts_with("transport failure"))
                })
                .unwrap_or(false)
        });
        if all_transport {
            return Err(CliError::Transport(format!(
                "all {} teacher calls failed; see {}",
                summary.total,
                args.out.display()
            )));
        }
    }
    Ok(0)
}

/// Offline smoke-test teacher: answers every task from its own label, in the
/// shape the task's template asks for.
fn stub_teacher(tasks: &[DistillTask]) -> Box<dyn TeacherClient> {
    let mut by_question: HashMap<String, String> = HashMap::new();
    for task in tasks {
        let answer = task.gt.answers[0].clone();
        let text = match task.prompt_kind {
            PromptKind::Alr => render_alr(&AlrResponse {
                analysis: format!("The question asks: {}", task.question),
                localization: format!(
                    "Evidence appears on pages {:?}",
                    task.gt.evidence_pages.iter().collect::<Vec<_>>()
                ),
                reasoning: "The cited pages support the answer directly.".into(),
                evidence_pages: task.gt.evidence_pages.iter().copied().collect(),
                final_answer: answer,
            })
            .unwrap_or_else(|_| "render failed".into()),
            PromptKind::Vanilla => format!(
                "<think>\nLet's think step by step. The context answers the question directly.\n</think>\n<answer>\n{answer}\n</answer>"
            ),
        };
        by_question.insert(task.question.clone(), text);
    }
    Box::new(FnTeacher(move |req: &alr_core::distill::TeacherRequest| {
        by_question
            .iter()
            .find(|(q, _)| req.user_text.contains(q.as_str()))
            .map(|(_, text)| text.clone())
            .ok_or_else(|| alr_core::distill::TransportError("unknown question".into()))
    }))
}

/// Offline judge stub: always confirms the stored label.
fn stub_judge(tasks: &[DistillTask]) -> Box<dyn JudgeClient> {
    let answers: Vec<String> = tasks.iter().map(|t| t.gt.answers[0].clone()).collect();
    Box::new(FnJudge(move |prompt: &str| {
        let filled = prompt.rsplit("Answer:\n").next().unwrap_or_default();
        let line = filled.lines().next().unwrap_or_default().to_string();
        if answers.iter().any(|a| a == &line) {
            Ok(line)
        } else {
            Ok("Error".to_string())
        }
    }))
}

fn joined_records(pred_path: &std::path::Path, gt_path: &std::path::Path) -> CliResult<Vec<EvalRecord>> {
    let gt_index: HashMap<String, GtEntry> =
        io::index_ground_truth(io::read_jsonl::<GtRow>(gt_path)?)?;
    let preds: Vec<PredRow> = io::read_jsonl(pred_path)?;
    let mut records = Vec::with_capacity(preds.len());
    for row in preds {
        let entry = gt_index.get(&row.sample_id).ok_or_else(|| {
            CliError::validation(format!("no ground truth for sample `{}`", row.sample_id))
        })?;
        let record = EvalRecord {
            sample_id: row.sample_id,
            pred_answer: row.answer,
            pred_pages: row.evidence_pages.iter().copied().collect(),
            gt: entry.gt.clone(),
            doc_num_pages: entry.doc_num_pages,
        };
        record.validate().map_err(|e| CliError::validation(e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

fn cmd_eval(args: &EvalArgs) -> CliResult<i32> {
    let records = joined_records(&args.pred, &args.gt)?;
    let fail = |e: alr_core::eval::EvalError| CliError::validation(e.to_string());
    match args.metric {
        MetricArg::Anls => {
            let value = metric_anls::<f64>(&records, DEFAULT_TAU).map_err(fail)?;
            print_canonical(&serde_json::json!({"metric": "anls", "value": value}))?;
        }
        MetricArg::Acc => {
            let value = metric_accuracy::<f64>(&records, args.mode.into()).map_err(fail)?;
            let mode = match args.mode {
                ModeArg::Relaxed => "relaxed",
                ModeArg::Strict => "strict",
            };
            print_canonical(&serde_json::json!({"metric": "accuracy", "mode": mode, "value": value}))?;
        }
        MetricArg::Prf => {
            let (p, r, f) = evidence_prf::<f64>(&records, args.beta).map_err(fail)?;
            print_canonical(&serde_json::json!({
                "metric": "evidence_prf",
                "beta": args.beta,
                "precision": p,
                "recall": r,
                "f_beta": f,
            }))?;
        }
        MetricArg::TokenF1 => {
            let value = metric_token_f1::<f64>(&records).map_err(fail)?;
            print_canonical(&serde_json::json!({"metric": "token_f1", "value": value}))?;
        }
    }
    Ok(0)
}

fn cmd_breakdown(args: &BreakdownArgs) -> CliResult<i32> {
    let records = joined_records(&args.pred, &args.gt)?;
    let table = error_breakdown(&records).map_err(|e| CliError::validation(e.to_string()))?;
    print_canonical(&table)?;
    print!("{}", table.render_text());
    Ok(0)
}

fn cmd_rag_sweep(args: &RagSweepArgs) -> CliResult<i32> {
    let ks: Vec<usize> = io::parse_u32_list(&args.ks)?.into_iter().map(|k| k as usize).collect();
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::validation("--ks needs positive cutoffs"));
    }
    let gt_index = io::index_ground_truth(io::read_jsonl::<GtRow>(&args.gt)?)?;
    let rows: Vec<ScoresRow> = io::read_jsonl(&args.scores)?;
    let mut samples = Vec::with_capacity(rows.len());
    for row in &rows {
        let entry = gt_index.get(&row.sample_id).ok_or_else(|| {
            CliError::validation(format!("no ground truth for sample `{}`", row.sample_id))
        })?;
        samples.push((
            RetrievalScores { sample_id: row.sample_id.clone(), scores: io::parse_scores(row)? },
            entry.gt.evidence_pages.clone(),
        ));
    }
    let table = rag_sweep::<f64>(&samples, &ks).map_err(|e| CliError::validation(e.to_string()))?;
    println!("k,precision,recall,f1");
    for row in table {
        println!(
            "{},{},{},{}",
            row.k,
            round_sig(row.precision, 9),
            round_sig(row.recall, 9),
            round_sig(row.f1, 9)
        );
    }
    Ok(0)
}

#[derive(Serialize)]
struct LengthSweepRow {
    target_len: u32,
    pages: Vec<u32>,
}

fn cmd_length_sweep(args: &LengthSweepArgs) -> CliResult<i32> {
    let targets = io::parse_u32_list(&args.targets)?;
    if targets.is_empty() {
        return Err(CliError::validation("--targets needs at least one length"));
    }
    let evidence: BTreeSet<u32> = io::parse_u32_list(&args.evidence)?.into_iter().collect();
    for &target_len in &targets {
        let pages = length_truncate(args.doc_pages, &evidence, target_len, args.seed)
            .map_err(|e| CliError::validation(e.to_string()))?;
        print_canonical(&LengthSweepRow { target_len, pages })?;
    }
    Ok(0)
}

fn cmd_serve(args: &ServeArgs, resolver: &Resolver) -> CliResult<i32> {
    let weights = resolver
        .resolve(args.weights, "weights", WeightsSpec(RewardWeights64::default()))?
        .0;
    let cfg = ServiceConfig {
        bind_addr: resolver.resolve(
            args.bind.clone(),
            "bind_addr",
            service::DEFAULT_BIND_ADDR.to_string(),
        )?,
        scoring: ScoringConfig {
            weights,
            beta: resolver.resolve(args.beta, "beta", DEFAULT_BETA)?,
            tau: resolver.resolve(args.tau, "tau", DEFAULT_TAU)?,
            epsilon: resolver.resolve(args.epsilon, "epsilon", DEFAULT_EPSILON)?,
            tol: resolver.resolve(args.tol, "tol", DEFAULT_SPREAD_TOL)?,
        },
        max_batch_size: resolver.resolve(
            args.max_batch,
            "max_batch_size",
            service::DEFAULT_MAX_BATCH_SIZE,
        )?,
        request_timeout: Duration::from_secs(resolver.resolve(
            args.timeout_secs,
            "request_timeout_secs",
            service::DEFAULT_REQUEST_TIMEOUT_SECS,
        )?),
    };
    if args.stdio {
        let stdin = std::io::stdin();
        let stdout = std::io::stdout();
        service::serve_stdio(&cfg, &mut stdin.lock(), &mut stdout.lock())?;
        return Ok(0);
    }
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::validation(format!("tokio runtime: {e}")))?;
    runtime
        .block_on(service::serve(cfg))
        .map_err(|e| CliError::validation(format!("serve: {e}")))?;
    Ok(0)
}
