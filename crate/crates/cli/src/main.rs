// SPDX-License-Identifier: Apache-2.0

//! `isochk`: check traces against isolation levels, generate workloads,
//! and inspect the intermediate artifacts.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use isochk::analysis::{gen_ir, ModuleRegistry};
use isochk::asg::{asg_to_json, build_asg, AsgError};
use isochk::check::{check, CheckOptions, Verdict};
use isochk::harness::{
    generate_valid_trace, inject_anomaly, serializability_oracle, AnomalyKind, AnomalySpec, HarnessError,
    OracleVerdict, ValueSpace, WorkloadProfile,
};
use isochk::ir::Ir;
use isochk::isolation::{spec_for, IsolationLevel};
use isochk::optimizer::reachability_prune;
use isochk::report::verdict_json;
use isochk::solver::cnf::export_cnf;
use isochk::solver::Budget;
use isochk::trace::{parse_trace, serialize_trace, Trace};

const EXIT_ACCEPT: u8 = 0;
const EXIT_REJECT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "isochk", version, about = "Sound and complete transaction isolation checker")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a trace against an isolation level.
    Check(CheckArgs),
    /// Generate a workload trace, optionally with injected anomalies.
    Gen(GenArgs),
    /// Decide serializability of a small trace by exhaustive search.
    Oracle(OracleArgs),
    /// Print the abstract semantic graph as JSON.
    DumpAsg(DumpArgs),
    /// Print the constraint IR as text.
    DumpIr(DumpArgs),
    /// Write the constraints as DIMACS CNF.
    ExportCnf(DumpArgs),
}

#[derive(Args)]
struct Io {
    /// Trace file in JSONL; `-` or absent reads stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file; absent writes stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HintName {
    UniqueValues,
    Tombstones,
    SessionOrder,
    RealTime,
    VersionOrder,
    VersionSets,
}

#[derive(Args)]
struct CheckArgs {
    /// One of sser, ser, si, rr, rc.
    #[arg(long)]
    level: String,
    #[command(flatten)]
    io: Io,
    /// Disregard a hint recorded in the trace (repeatable).
    #[arg(long = "ignore-hint", value_enum)]
    ignore_hints: Vec<HintName>,
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    no_prio: bool,
    /// Chronological backtracking instead of clause learning.
    #[arg(long)]
    no_learning: bool,
    /// Check trace segments for a quick rejection first.
    #[arg(long)]
    unsat_search: bool,
    #[arg(long, default_value_t = 3)]
    segments: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds; ISOCHK_TIMEOUT takes precedence.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long)]
    max_decisions: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    /// Built-in profile: blindw or randombench.
    #[arg(long, default_value = "blindw", conflicts_with = "profile")]
    workload: String,
    /// JSON workload profile file.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    txns: Option<usize>,
    #[arg(long)]
    keys: Option<usize>,
    #[arg(long)]
    sessions: Option<u32>,
    /// Draw values from this many distinct strings.
    #[arg(long)]
    duplicates: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// One of lost_update, read_skew, g1c, dirty_write, fractured_read, time_inversion.
    #[arg(long)]
    anomaly: Option<String>,
    #[arg(long, default_value_t = 1, requires = "anomaly")]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// ser, or sser to also respect real time.
    #[arg(long, default_value = "ser")]
    level: String,
    #[command(flatten)]
    io: Io,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    level: String,
    #[command(flatten)]
    io: Io,
    /// Skip reachability pruning before dumping.
    #[arg(long)]
    no_prune: bool,
}

/// A failure that maps to a specific exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn parse_level(s: &str) -> Result<IsolationLevel> {
    s.parse().map_err(|e| anyhow!("{e}"))
}

fn read_trace(input: Option<&Path>) -> Result<Trace> {
    let trace = match input {
        None => parse_trace(io::stdin().lock()),
        Some(p) if p == Path::new("-") => parse_trace(io::stdin().lock()),
        Some(p) => {
            let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            parse_trace(BufReader::new(f))
        }
    };
    trace.map_err(|e| anyhow!("{e}"))
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: Option<&Path>, j: &serde_json::Value) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, j)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn timeout_secs(flag: f64) -> Result<f64> {
    let secs = match std::env::var("ISOCHK_TIMEOUT") {
        Ok(v) => v.trim().parse::<f64>().map_err(|_| anyhow!("ISOCHK_TIMEOUT must be a number of seconds, got {v:?}"))?,
        Err(_) => flag,
    };
    if !(secs > 0.0 && secs.is_finite()) {
        bail!("timeout must be positive, got {secs}");
    }
    Ok(secs)
}

fn clear_hints(t: &mut Trace, names: &[HintName]) {
    let h = &mut t.hints;
    for n in names {
        match n {
            HintName::UniqueValues => h.unique_values = false,
            HintName::Tombstones => h.tombstones = false,
            HintName::SessionOrder => h.session_order = false,
            HintName::RealTime => h.real_time = false,
            HintName::VersionOrder => h.version_order.clear(),
            HintName::VersionSets => h.version_sets.clear(),
        }
    }
}

fn cmd_check(a: CheckArgs) -> Result<u8> {
    let level = parse_level(&a.level)?;
    let timeout = timeout_secs(a.timeout)?;
    let mut t = read_trace(a.io.input.as_deref())?;
    clear_hints(&mut t, &a.ignore_hints);
    let opts = CheckOptions {
        prune: !a.no_prune,
        prio: !a.no_prio,
        learning: !a.no_learning,
        unsat_search: a.unsat_search,
        segments: a.segments.max(1),
        seed: a.seed,
        budget: Budget { timeout: Some(Duration::from_secs_f64(timeout)), max_decisions: a.max_decisions },
        modules: Vec::new(),
    };
    let report = check(&t, level, &opts).map_err(|e| anyhow!("{e}"))?;
    log::info!("{} at {level} in {:.1} ms", report.verdict.as_str(), report.stats.total_ms);
    write_json(a.io.out.as_deref(), &verdict_json(&report))?;
    Ok(match report.verdict {
        Verdict::Accept { .. } => EXIT_ACCEPT,
        Verdict::Reject(_) => EXIT_REJECT,
        Verdict::BudgetExceeded => EXIT_BUDGET,
    })
}

fn cmd_gen(a: GenArgs) -> Result<u8> {
    let mut p = match &a.profile {
        Some(path) => {
            let mut text = String::new();
            File::open(path)
                .and_then(|mut f| f.read_to_string(&mut text))
                .with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str::<WorkloadProfile>(&text).context("invalid profile")?
        }
        None => WorkloadProfile::by_name(&a.workload, 0)
            .ok_or_else(|| anyhow!("unknown workload {:?} (expected blindw or randombench)", a.workload))?,
    };
    if let Some(n) = a.txns {
        p.num_txns = n;
    } else if a.profile.is_none() {
        p.num_txns = 100;
    }
    if p.num_txns == 0 {
        bail!("--txns must be positive");
    }
    if let Some(k) = a.keys {
        p.num_keys = k;
    }
    if let Some(s) = a.sessions {
        p.sessions = s;
    }
    if let Some(c) = a.duplicates {
        p.value_space = ValueSpace::DuplicateHeavy(c);
    }
    if let Some(s) = a.seed {
        p.seed = s;
    }
    let mut t = generate_valid_trace(&p).map_err(|e| anyhow!("{e}"))?;
    let truth = match &a.anomaly {
        Some(name) => {
            let kind: AnomalyKind = name.parse().map_err(|e: String| anyhow!(e))?;
            t = inject_anomaly(&t, AnomalySpec { kind, count: a.count }).map_err(|e| anyhow!("{e}"))?;
            json!({"ground_truth": "anomalies_injected", "anomaly": kind.as_str(), "count": a.count})
        }
        None => json!({"ground_truth": "valid"}),
    };
    let mut w = output(a.out.as_deref())?;
    serialize_trace(&t, &mut w)?;
    w.flush()?;
    let mut summary = truth;
    summary["workload"] = json!(p.name);
    summary["txns"] = json!(t.transactions.len());
    summary["seed"] = json!(p.seed);
    // With the trace on stdout the summary goes to stderr.
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(EXIT_ACCEPT)
}

fn cmd_oracle(a: OracleArgs) -> Result<u8> {
    let strict = match parse_level(&a.level)? {
        IsolationLevel::Ser => false,
        IsolationLevel::Sser => true,
        other => bail!("the oracle decides ser and sser only, not {other}"),
    };
    let t = read_trace(a.io.input.as_deref())?;
    let (j, code) = match serializability_oracle(&t, strict) {
        Ok(OracleVerdict::Accept(order)) => (json!({"verdict": "accept", "witness": order}), EXIT_ACCEPT),
        Ok(OracleVerdict::Reject) => (json!({"verdict": "reject", "witness": null}), EXIT_REJECT),
        Err(e @ HarnessError::TooLarge(_)) => return Err(Exit(EXIT_USAGE, format!("TooLarge: {e}")).into()),
        Err(e) => return Err(anyhow!("{e}")),
    };
    write_json(a.io.out.as_deref(), &j)?;
    Ok(code)
}

fn asg_error(e: AsgError) -> anyhow::Error {
    let code = match e {
        AsgError::Integrity { .. }
        | AsgError::NoExplanation { .. }
        | AsgError::VersionSetMismatch { .. }
        | AsgError::VerOrderCycle { .. } => EXIT_REJECT,
        _ => EXIT_USAGE,
    };
    Exit(code, e.to_string()).into()
}

fn lower(a: &DumpArgs) -> Result<Ir> {
    let level = parse_level(&a.level)?;
    let t = read_trace(a.io.input.as_deref())?;
    let asg = build_asg(&t, spec_for(level)).map_err(asg_error)?;
    let mut ir = gen_ir(&asg, &t, &ModuleRegistry::for_hints(&t.hints)).map_err(|e| anyhow!("{e}"))?;
    if !a.no_prune {
        if let Err(early) = reachability_prune(&mut ir) {
            log::warn!("pruning found a contradiction: {}", early.detail);
        }
    }
    Ok(ir)
}

fn cmd_dump_asg(a: DumpArgs) -> Result<u8> {
    let level = parse_level(&a.level)?;
    let t = read_trace(a.io.input.as_deref())?;
    let asg = build_asg(&t, spec_for(level)).map_err(asg_error)?;
    write_json(a.io.out.as_deref(), &asg_to_json(&asg))?;
    Ok(EXIT_ACCEPT)
}

fn cmd_dump_ir(a: DumpArgs) -> Result<u8> {
    let ir = lower(&a)?;
    let mut w = output(a.io.out.as_deref())?;
    w.write_all(ir.to_text().as_bytes())?;
    w.flush()?;
    Ok(EXIT_ACCEPT)
}

fn cmd_export_cnf(a: DumpArgs) -> Result<u8> {
    let ir = lower(&a)?;
    let mut w = output(a.io.out.as_deref())?;
    export_cnf(&ir, &mut w)?;
    w.flush()?;
    Ok(EXIT_ACCEPT)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_ACCEPT });
        }
    };
    let filter = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(filter).parse_default_env().init();

    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::DumpAsg(a) => cmd_dump_asg(a),
        Command::DumpIr(a) => cmd_dump_ir(a),
        Command::ExportCnf(a) => cmd_export_cnf(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.downcast_ref::<Exit>().map_or(EXIT_USAGE, |x| x.0);
            eprintln!("isochk: {e:#}");
            ExitCode::from(code)
        }
    }
}
