// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isochk::check::{check, CheckOptions};
use isochk::fixtures;
use isochk::harness::serializability_oracle;
use isochk::isolation::IsolationLevel;
use isochk::trace::{parse_trace_str, serialize_trace_string, validate_trace, Trace};
use tempfile::TempDir;

fn isochk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isochk")).args(args).env_remove("ISOCHK_TIMEOUT").output().unwrap()
}

fn write(dir: &TempDir, name: &str, t: &Trace) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serialize_trace_string(t)).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn check_accepts_tau0_with_witness() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "tau0.jsonl", &fixtures::tau0());
    let out = isochk(&["check", "--level", "ser", "--input", s(&p)]);
    assert_eq!(out.status.code(), Some(0));
    let j = json(&out);
    assert_eq!(j["verdict"], "accept");
    assert_eq!(j["witness"], serde_json::json!([1, 2, 3]));
}

#[test]
fn check_rejects_lost_update_under_si() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "lostupdate.jsonl", &fixtures::lost_update());
    let out = isochk(&["check", "--level", "si", "--input", s(&p)]);
    assert_eq!(out.status.code(), Some(1));
    let j = json(&out);
    assert_eq!(j["verdict"], "reject");
    let cycle = j["counterexample"]["cycle"].as_array().unwrap();
    let txns: std::collections::BTreeSet<String> = cycle
        .iter()
        .flat_map(|e| [e["src"].as_str().unwrap(), e["dst"].as_str().unwrap()])
        .map(|n| n[n.find('T').unwrap() + 1..].chars().take_while(|c| c.is_ascii_digit()).collect())
        .collect();
    assert_eq!(txns.len(), 2, "{cycle:?}");
}

#[test]
fn unsupported_level_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "tau0.jsonl", &fixtures::tau0());
    let out = isochk(&["check", "--level", "pl2plus", "--input", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported isolation level"));
}

#[test]
fn malformed_input_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.jsonl");
    std::fs::write(&p, "{not json\n").unwrap();
    assert_eq!(isochk(&["check", "--level", "ser", "--input", s(&p)]).status.code(), Some(2));
    assert_eq!(isochk(&["check", "--level", "ser", "--input", "/nonexistent/x"]).status.code(), Some(2));
    assert_eq!(isochk(&["check", "--input", s(&p)]).status.code(), Some(2));
}

#[test]
fn verdict_goes_to_out_file() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "tau0.jsonl", &fixtures::tau0());
    let o = dir.path().join("v.json");
    let out = isochk(&["check", "--level", "ser", "--input", s(&p), "--out", s(&o)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(j["verdict"], "accept");
}

#[test]
fn decision_budget_exits_3() {
    let dir = TempDir::new().unwrap();
    let t = isochk::harness::generate_valid_trace(&{
        let mut p = isochk::harness::WorkloadProfile::randombench(300);
        p.num_keys = 20;
        p.value_space = isochk::harness::ValueSpace::DuplicateHeavy(2);
        p
    })
    .unwrap();
    let p = write(&dir, "dup.jsonl", &t);
    let out = isochk(&["check", "--level", "ser", "--input", s(&p), "--max-decisions", "1", "--no-prune"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["verdict"], "budget_exceeded");
}

#[test]
fn timeout_env_overrides_flag() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "tau0.jsonl", &fixtures::tau0());
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_isochk"))
            .args(["check", "--level", "ser", "--input", s(&p), "--timeout", "30"])
            .env("ISOCHK_TIMEOUT", env)
            .output()
            .unwrap()
    };
    assert_eq!(run("0").status.code(), Some(2));
    assert_eq!(run("abc").status.code(), Some(2));
    assert_eq!(run("5").status.code(), Some(0));
    assert_eq!(isochk(&["check", "--level", "ser", "--input", s(&p), "--timeout", "0"]).status.code(), Some(2));
}

#[test]
fn optimizer_flags_keep_the_verdict() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "g1c.jsonl", &fixtures::g1c());
    for flags in [
        &["--no-prune"][..],
        &["--no-prio"],
        &["--no-learning"],
        &["--unsat-search", "--segments", "2", "--seed", "9"],
        &["--no-prune", "--no-prio"],
    ] {
        let mut args = vec!["check", "--level", "rc", "--input", s(&p)];
        args.extend_from_slice(flags);
        assert_eq!(isochk(&args).status.code(), Some(1), "{flags:?}");
    }
}

#[test]
fn ignoring_a_hint_changes_the_question() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "stale.jsonl", &fixtures::session_stale_read());
    assert_eq!(isochk(&["check", "--level", "ser", "--input", s(&p)]).status.code(), Some(1));
    let out = isochk(&["check", "--level", "ser", "--input", s(&p), "--ignore-hint", "session-order"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn gen_writes_a_valid_trace() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("t.jsonl");
    let out = isochk(&["gen", "--workload", "blindw", "--txns", "100", "--seed", "7", "--out", s(&o)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["ground_truth"], "valid");
    let t = parse_trace_str(&std::fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(t.committed_count(), 100);
    assert_eq!(validate_trace(&t), vec![]);
    assert!(check(&t, IsolationLevel::Sser, &CheckOptions::default()).unwrap().verdict.is_accept());

    let again = dir.path().join("u.jsonl");
    isochk(&["gen", "--workload", "blindw", "--txns", "100", "--seed", "7", "--out", s(&again)]);
    assert_eq!(std::fs::read(&o).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn gen_with_anomalies_is_rejected_under_si() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("t.jsonl");
    let out = isochk(&[
        "gen", "--workload", "randombench", "--txns", "60", "--seed", "3", "--anomaly", "lost_update", "--count", "2",
        "--out", s(&o),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j = json(&out);
    assert_eq!(j["ground_truth"], "anomalies_injected");
    assert_eq!(j["count"], 2);
    assert_eq!(isochk(&["check", "--level", "si", "--input", s(&o)]).status.code(), Some(1));
    assert_eq!(isochk(&["check", "--level", "rc", "--input", s(&o)]).status.code(), Some(0));
}

#[test]
fn gen_rejects_bad_flags() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("t.jsonl");
    assert_eq!(isochk(&["gen", "--txns", "0", "--out", s(&o)]).status.code(), Some(2));
    assert_eq!(isochk(&["gen", "--workload", "tpcc", "--out", s(&o)]).status.code(), Some(2));
    assert_eq!(isochk(&["gen", "--anomaly", "nope", "--out", s(&o)]).status.code(), Some(2));
    assert_eq!(isochk(&["gen", "--anomaly", "g1c", "--count", "0", "--out", s(&o)]).status.code(), Some(2));
}

#[test]
fn gen_reads_a_profile_file() {
    let dir = TempDir::new().unwrap();
    let mut p = isochk::harness::WorkloadProfile::randombench(25);
    p.num_keys = 12;
    let prof = dir.path().join("p.json");
    std::fs::write(&prof, serde_json::to_string(&p).unwrap()).unwrap();
    let out = isochk(&["gen", "--profile", s(&prof)]);
    assert_eq!(out.status.code(), Some(0));
    let t = parse_trace_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(t.committed_count(), 25);
}

#[test]
fn oracle_subcommand() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "tau0.jsonl", &fixtures::tau0());
    let out = isochk(&["oracle", "--input", s(&p)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["witness"], serde_json::json!([1, 2, 3]));
    let p = write(&dir, "lu.jsonl", &fixtures::lost_update());
    assert_eq!(isochk(&["oracle", "--input", s(&p)]).status.code(), Some(1));

    let mut b = fixtures::TraceBuilder::new();
    for i in 1..=11 {
        b = b.txn(i, i, vec![]);
    }
    let p = write(&dir, "big.jsonl", &b.build());
    let out = isochk(&["oracle", "--input", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TooLarge"));
    assert_eq!(isochk(&["oracle", "--level", "si", "--input", s(&p)]).status.code(), Some(2));
}

#[test]
fn check_and_oracle_agree_on_the_corpus() {
    let dir = TempDir::new().unwrap();
    for (name, t) in fixtures::corpus() {
        if t.committed_count() > 10 || serializability_oracle(&t, false).is_err() {
            continue;
        }
        let p = write(&dir, "t.jsonl", &t);
        for level in ["ser", "sser"] {
            let c = isochk(&["check", "--level", level, "--input", s(&p)]).status.code();
            let o = isochk(&["oracle", "--level", level, "--input", s(&p)]).status.code();
            if c == Some(2) {
                continue;
            }
            assert_eq!(c, o, "{name} {level}");
        }
    }
}

#[test]
fn dump_commands() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "toy.jsonl", &fixtures::toy(fixtures::ToySetting::B));
    let out = isochk(&["dump-asg", "--level", "ser", "--input", s(&p)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out).is_object());

    let out = isochk(&["dump-ir", "--level", "ser", "--input", s(&p), "--no-prune"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!out.stdout.is_empty());

    let cnf = dir.path().join("t.cnf");
    let out = isochk(&["export-cnf", "--level", "ser", "--input", s(&p), "--out", s(&cnf)]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&cnf).unwrap();
    assert!(text.lines().any(|l| l.starts_with("p cnf ")));
    assert!(text.lines().any(|l| l.starts_with("c edge 1 ")));

    let bad = write(&dir, "aborted.jsonl", &fixtures::aborted_read());
    assert_eq!(isochk(&["dump-asg", "--level", "ser", "--input", s(&bad)]).status.code(), Some(1));
}
