//! End-to-end tests of the `alr` binary: exit codes, file formats, config
//! precedence, and the serve/healthz path.

use alr_core::grammar::{render_alr, AlrResponse};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

fn alr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alr"))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn rollout(pages: &[u32], answer: &str) -> String {
    render_alr(&AlrResponse {
        analysis: "a".into(),
        localization: "l".into(),
        reasoning: "r".into(),
        evidence_pages: pages.to_vec(),
        final_answer: answer.into(),
    })
    .unwrap()
}

#[test]
fn parse_exit_codes_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_file(dir.path(), "good.txt", &rollout(&[5], "Not answerable"));
    let out = alr().arg("parse").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let parsed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["status"], "ok");
    assert_eq!(parsed["response"]["evidence_pages"][0], 5);

    let bad = write_file(dir.path(), "bad.txt", "no structure here");
    let out = alr().arg("parse").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let parsed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["status"], "malformed");
    assert!(!parsed["diagnostics"].as_array().unwrap().is_empty());
}

#[test]
fn parse_lenient_flag_tolerates_surrounding_text() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("Sure!\n{}\ntrailing", rollout(&[1], "a"));
    let file = write_file(dir.path(), "wrapped.txt", &text);
    assert_eq!(alr().arg("parse").arg(&file).output().unwrap().status.code(), Some(2));
    let out = alr().arg("parse").arg("--lenient").arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let out = alr().arg("parse").arg("--no-such-flag").arg("x").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn score_emits_one_breakdown_per_line_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_file(
        dir.path(),
        "gt.jsonl",
        &format!(
            "{}\n{}\n",
            json!({"sample_id": "a", "answers": ["yes"], "evidence_pages": [2, 3]}),
            json!({"sample_id": "b", "answers": ["no"], "evidence_pages": [1]}),
        ),
    );
    let pred = write_file(
        dir.path(),
        "pred.jsonl",
        &format!(
            "{}\n{}\n",
            json!({"sample_id": "b", "response": rollout(&[1], "no")}),
            json!({"sample_id": "a", "response": "malformed"}),
        ),
    );
    let out = alr()
        .args(["score", "--weights", "0.1,0.3,0.6", "--beta", "2.0", "--tau", "0.5"])
        .arg("--gt")
        .arg(&gt)
        .arg("--pred")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["total"], 1.0); // pred order: b first
    assert_eq!(lines[1]["total"], 0.0);
}

#[test]
fn score_missing_ground_truth_is_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_file(dir.path(), "gt.jsonl", &format!("{}\n", json!({"sample_id": "a", "answers": ["x"]})));
    let pred =
        write_file(dir.path(), "pred.jsonl", &format!("{}\n", json!({"sample_id": "zz", "response": "r"})));
    let out = alr().arg("score").arg("--gt").arg(&gt).arg("--pred").arg(&pred).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_beats_env_and_flags_beat_config() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_file(
        dir.path(),
        "gt.jsonl",
        &format!("{}\n", json!({"sample_id": "a", "answers": ["yes"], "evidence_pages": [1]})),
    );
    // right pages, wrong answer: components (format, evidence, answer) = (1, 1, 0)
    let pred = write_file(
        dir.path(),
        "pred.jsonl",
        &format!("{}\n", json!({"sample_id": "a", "response": rollout(&[1], "no")})),
    );
    let config = write_file(dir.path(), "alr.conf", "weights = 0.0,0.0,1.0\n");
    let total_of = |out: std::process::Output| -> f64 {
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let line: Value =
            serde_json::from_str(String::from_utf8(out.stdout).unwrap().lines().next().unwrap())
                .unwrap();
        line["total"].as_f64().unwrap()
    };

    // file weights (0,0,1) beat the env weights: total = answer component = 0
    let out = alr()
        .env("ALR_WEIGHTS", "0.5,0.25,0.25")
        .arg("--config")
        .arg(&config)
        .arg("score")
        .arg("--gt")
        .arg(&gt)
        .arg("--pred")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(total_of(out), 0.0);

    // flag beats the file: 0.4*1 + 0.6*1 + 0*0 = 1.0
    let out = alr()
        .arg("--config")
        .arg(&config)
        .args(["score", "--weights", "0.4,0.6,0.0"])
        .arg("--gt")
        .arg(&gt)
        .arg("--pred")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(total_of(out), 1.0);

    // env applies when neither flag nor file speaks: 0.5*1 + 0.25*1 + 0.25*0
    let out = alr()
        .env("ALR_WEIGHTS", "0.5,0.25,0.25")
        .arg("score")
        .arg("--gt")
        .arg(&gt)
        .arg("--pred")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(total_of(out), 0.75);
}

#[test]
fn advantages_reads_groups_and_filters() {
    let dir = tempfile::tempdir().unwrap();
    let groups = write_file(
        dir.path(),
        "groups.jsonl",
        &format!(
            "{}\n{}\n",
            json!({"question_id": "q1", "rewards": [1.0, 0.0, 0.0, 1.0]}),
            json!({"rewards": [0.5, 0.5, 0.5]}),
        ),
    );
    let out = alr().arg("advantages").arg("--groups").arg(&groups).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["kept"], true);
    let adv = lines[0]["advantages"].as_array().unwrap();
    assert!((adv[0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(lines[1]["kept"], false);
    assert_eq!(lines[1]["question_id"], "1");
    assert!(lines[1]["advantages"].as_array().unwrap().iter().all(|a| a.as_f64() == Some(0.0)));
}

#[test]
fn allocate_matches_library_and_is_deterministic() {
    let run = || {
        alr()
            .args(["allocate", "--pages", "11", "--evidence", "1", "--seed", "9", "--fraction", "0.7"])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let plan: Value = serde_json::from_slice(&a.stdout).unwrap();
    let budgets = plan["budgets"].as_array().unwrap();
    assert_eq!(budgets[0], 1024);
    assert_eq!(budgets.iter().filter(|b| **b == json!(256)).count(), 7);
    assert_eq!(plan["total_sequence_tokens"], 5921);

    let out = alr()
        .args(["allocate", "--pages", "3", "--evidence", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn distill_stub_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let tasks: String = (0..4)
        .map(|i| {
            json!({
                "sample_id": format!("s{i}"),
                "question": format!("what is fact {i}?"),
                "doc_id": "d1",
                "doc_num_pages": 6,
                "answers": [format!("fact-{i}")],
                "evidence_pages": [i % 6 + 1],
                "page_paths": (1..=6).map(|p| format!("img/{p}.png")).collect::<Vec<_>>(),
            })
            .to_string()
                + "\n"
        })
        .collect();
    let tasks_path = write_file(dir.path(), "tasks.jsonl", &tasks);
    let out_path = dir.path().join("records.jsonl");
    let out = alr()
        .arg("distill")
        .arg("--tasks")
        .arg(&tasks_path)
        .arg("--out")
        .arg(&out_path)
        .args(["--prompt", "alr", "--distractors", "2", "--seed", "11", "--concurrency", "2", "--stub"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["total"], 4);
    assert_eq!(summary["em_pass"], 4);
    assert_eq!(summary["pass_rate"], 1.0);

    let records = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(records.lines().count(), 4);
    for line in records.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["verdict"], "em_pass");
    }
}

#[test]
fn eval_and_breakdown_over_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_file(
        dir.path(),
        "gt.jsonl",
        &format!(
            "{}\n{}\n",
            json!({"sample_id": "a", "answers": ["2001-07-27"], "evidence_pages": [1]}),
            json!({"sample_id": "b", "answers": ["blue"], "evidence_pages": [2]}),
        ),
    );
    let pred = write_file(
        dir.path(),
        "pred.jsonl",
        &format!(
            "{}\n{}\n",
            json!({"sample_id": "a", "answer": "2001/07/27", "evidence_pages": [1]}),
            json!({"sample_id": "b", "answer": "red", "evidence_pages": [3]}),
        ),
    );
    let out = alr()
        .args(["eval", "--metric", "anls"])
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["value"], 0.4); // (0.8 + 0.0) / 2

    let out = alr()
        .args(["eval", "--metric", "acc", "--mode", "strict"])
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["value"], 0.0);

    let out = alr()
        .arg("breakdown")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let first_line: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first_line["total"], 2);
    assert_eq!(first_line["recall_full_acc_high"], 1);
    assert_eq!(first_line["recall_partial_acc_low"], 1);
    assert!(text.contains("Acc>=0.5"));
}

#[test]
fn rag_sweep_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_file(
        dir.path(),
        "gt.jsonl",
        &format!("{}\n", json!({"sample_id": "a", "answers": ["x"], "evidence_pages": [3]})),
    );
    let scores = write_file(
        dir.path(),
        "scores.jsonl",
        &format!("{}\n", json!({"sample_id": "a", "scores": {"1": 0.2, "2": 0.1, "3": 0.9, "4": 0.5, "5": 0.3}})),
    );
    let out = alr()
        .args(["rag-sweep", "--ks", "1,5"])
        .arg("--scores")
        .arg(&scores)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,precision,recall,f1");
    assert_eq!(lines[1], "1,1,1,1");
    assert_eq!(lines[2], "5,0.2,1,0.333333333");
}

#[test]
fn length_sweep_emits_nested_page_lists() {
    let out = alr()
        .args(["length-sweep", "--doc-pages", "60", "--evidence", "12", "--targets", "10,20", "--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["target_len"], 10);
    let pages10: Vec<u32> =
        lines[0]["pages"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u32).collect();
    let pages20: Vec<u32> =
        lines[1]["pages"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u32).collect();
    assert_eq!(pages10.len(), 10);
    assert_eq!(pages20.len(), 20);
    assert!(pages10.contains(&12));
    assert!(pages10.iter().all(|p| pages20.contains(p)));
}

#[test]
fn serve_then_healthz_returns_200() {
    let mut child = alr()
        .args(["serve", "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut reader = BufReader::new(stdout);
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let resp = reqwest::blocking::get(format!("{base}/healthz")).unwrap();
    assert_eq!(resp.status(), 200);
    child.kill().unwrap();
    child.wait().unwrap();
}

#[test]
fn serve_stdio_line_protocol() {
    let mut child = alr()
        .args(["serve", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, "{}", json!({"op": "health"})).unwrap();
    writeln!(
        stdin,
        "{}",
        json!({"op": "score", "items": [{"response": rollout(&[1], "a"), "answers": ["a"], "evidence_pages": [1]}]})
    )
    .unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["status"], "ok");
    assert_eq!(lines[1]["results"][0]["total"], 1.0);
}

#[test]
fn distill_with_unreachable_teacher_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let task = json!({
        "sample_id": "s0",
        "question": "q?",
        "doc_id": "d",
        "doc_num_pages": 3,
        "answers": ["a"],
        "evidence_pages": [1],
        "page_paths": ["p1.png", "p2.png", "p3.png"],
    });
    let tasks = write_file(dir.path(), "tasks.jsonl", &format!("{task}\n"));
    let out_path = dir.path().join("records.jsonl");
    let out = alr()
        .env("TEACHER_URL", "http://127.0.0.1:9/v1/chat")
        .env("JUDGE_URL", "http://127.0.0.1:9/v1/chat")
        .arg("distill")
        .arg("--tasks")
        .arg(&tasks)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // records and summary were still written for debugging
    assert!(std::fs::read_to_string(&out_path).unwrap().lines().count() == 1);
}

#[test]
fn distill_without_endpoints_or_stub_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_file(dir.path(), "tasks.jsonl", "");
    let out = alr()
        .env_remove("TEACHER_URL")
        .env_remove("JUDGE_URL")
        .arg("distill")
        .arg("--tasks")
        .arg(&tasks)
        .arg("--out")
        .arg(dir.path().join("r.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TEACHER_URL"));
}
