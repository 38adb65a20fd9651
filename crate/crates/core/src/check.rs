// SPDX-License-Identifier: Apache-2.0

//! End-to-end checking: ASG, IR, optimization, and solving, with optional
//! unsat search over trace segments.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::analysis::{gen_ir, AnalysisError, ModuleRegistry, UserModule};
use crate::asg::{build_asg_scoped, AsgError};
use crate::graph::{EdgeType, NodeId, TxnRef};
use crate::ir::{Ir, VarId};
use crate::isolation::{spec_for, IsolationLevel, IsolationSpec, SpecError};
use crate::optimizer::{plan_segments, prioritize, reachability_prune, unsat_search, PruneStats, UnsatOutcome};
use crate::par;
use crate::solver::{solve, Budget, SolveOptions, SolveResult, SolveStats};
use crate::trace::{Key, Trace, TxnId};

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub prune: bool,
    pub prio: bool,
    pub learning: bool,
    pub unsat_search: bool,
    pub segments: usize,
    pub seed: u64,
    pub budget: Budget,
    /// Modules run after the built-in ones selected by the trace's hints.
    pub modules: Vec<Arc<dyn UserModule>>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            prune: true,
            prio: true,
            learning: true,
            unsat_search: false,
            segments: 3,
            seed: 0,
            budget: Budget { timeout: Some(Duration::from_secs(600)), max_decisions: None },
            modules: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    Cycle,
    Integrity,
    NoExplanation,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Cycle => "cycle",
            RejectReason::Integrity => "integrity",
            RejectReason::NoExplanation => "no_explanation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeType,
    pub key: Option<Key>,
    /// The pass, superposition or implication that produced the edge.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub reason: RejectReason,
    pub cycle: Vec<CycleEdge>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// `witness` lists committed transactions in a compatible serial order.
    Accept { witness: Vec<TxnId> },
    Reject(Counterexample),
    BudgetExceeded,
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept { .. })
    }

    pub fn is_reject(&self) -> bool {
        matches!(self, Verdict::Reject(_))
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Accept { .. } => "accept",
            Verdict::Reject(_) => "reject",
            Verdict::BudgetExceeded => "budget_exceeded",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckStats {
    pub txns: usize,
    pub vars: usize,
    pub known: usize,
    pub superpositions: usize,
    pub implications: usize,
    pub prune: PruneStats,
    pub solve: SolveStats,
    pub early_reject: bool,
    /// Segment that produced the verdict during unsat search.
    pub segment: Option<usize>,
    pub segments_checked: usize,
    pub asg_ms: f64,
    pub ir_ms: f64,
    pub optimize_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub stats: CheckStats,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("spec: {0}")]
    Spec(#[from] SpecError),
    #[error("asg: {0}")]
    Asg(AsgError),
    #[error("analysis: {0}")]
    Analysis(AnalysisError),
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn reject(reason: RejectReason, detail: String) -> Verdict {
    Verdict::Reject(Counterexample { reason, cycle: Vec::new(), detail })
}

fn cycle_edges(ir: &Ir, vars: &[VarId]) -> Vec<CycleEdge> {
    vars.iter()
        .map(|v| {
            let ev = &ir.vars[*v as usize];
            CycleEdge {
                src: ev.edge.src,
                dst: ev.edge.dst,
                kind: ev.edge.kind,
                key: ev.edge.key.map(|k| ir.keys.key(k).clone()),
                source: ev.provenance(ir.is_known(*v)),
            }
        })
        .collect()
}

/// Transactions in a topological order of the true edges, smallest node
/// first among ready ones.
pub fn witness_order(ir: &Ir, model: &[bool]) -> Vec<TxnId> {
    let n = ir.nodes.len();
    let ends = ir.var_endpoints();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0u32; n];
    for (v, on) in model.iter().enumerate() {
        if *on {
            let (a, b) = ends[v];
            succ[a as usize].push(b);
            indeg[b as usize] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<(NodeId, u32)>> =
        (0..n as u32).filter(|u| indeg[*u as usize] == 0).map(|u| Reverse((ir.nodes[u as usize], u))).collect();
    let mut out = Vec::new();
    while let Some(Reverse((node, u))) = heap.pop() {
        if let TxnRef::Txn(id) = node.txn {
            if ir.spec.witness_node(node.txn) == node {
                out.push(id);
            }
        }
        for &w in &succ[u as usize] {
            indeg[w as usize] -= 1;
            if indeg[w as usize] == 0 {
                heap.push(Reverse((ir.nodes[w as usize], w)));
            }
        }
    }
    out
}

/// Checks the committed transactions in `scope` (all when `None`).
pub fn check_scoped(
    t: &Trace,
    spec: &IsolationSpec,
    scope: Option<&BTreeSet<TxnId>>,
    opts: &CheckOptions,
    stop: &AtomicBool,
) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let mut stats = CheckStats::default();
    let done = |verdict, mut stats: CheckStats| {
        stats.total_ms = ms(start);
        Ok(CheckReport { verdict, stats })
    };

    let asg = match build_asg_scoped(t, spec, scope) {
        Ok(a) => a,
        Err(e) => {
            let reason = match &e {
                AsgError::Integrity { .. } | AsgError::VersionSetMismatch { .. } => RejectReason::Integrity,
                AsgError::NoExplanation { .. } => RejectReason::NoExplanation,
                AsgError::VerOrderCycle { .. } => RejectReason::Cycle,
                _ => return Err(CheckError::Asg(e)),
            };
            stats.asg_ms = ms(start);
            return done(reject(reason, e.to_string()), stats);
        }
    };
    stats.asg_ms = ms(start);
    stats.txns = asg.txns.len();

    let t_ir = Instant::now();
    let mut registry = ModuleRegistry::for_hints(&t.hints);
    for m in &opts.modules {
        registry.register(m.clone());
    }
    let mut ir = match gen_ir(&asg, t, &registry) {
        Ok(ir) => ir,
        Err(e @ AnalysisError::NoExplanation { .. }) => {
            stats.ir_ms = ms(t_ir);
            return done(reject(RejectReason::NoExplanation, e.to_string()), stats);
        }
        Err(e) => return Err(CheckError::Analysis(e)),
    };
    drop(asg);
    stats.ir_ms = ms(t_ir);
    stats.vars = ir.vars.len();
    stats.known = ir.known.len();
    stats.superpositions = ir.superpositions.len();
    stats.implications = ir.implications.len();

    let t_opt = Instant::now();
    if opts.prune {
        match reachability_prune(&mut ir) {
            Ok(p) => stats.prune = p,
            Err(early) => {
                stats.optimize_ms = ms(t_opt);
                stats.early_reject = true;
                let cx = Counterexample {
                    reason: RejectReason::Cycle,
                    cycle: cycle_edges(&ir, &early.cycle),
                    detail: early.detail,
                };
                return done(Verdict::Reject(cx), stats);
            }
        }
    }
    // A known cycle left unpruned is found by the solver at level 0.
    let prio = if opts.prio { prioritize(&ir).ok() } else { None };
    stats.optimize_ms = ms(t_opt);

    let t_solve = Instant::now();
    let sopts = SolveOptions { learning: opts.learning, budget: opts.budget };
    let (result, sstats) = solve(&ir, prio.as_ref(), sopts, stop);
    stats.solve = sstats;
    stats.solve_ms = ms(t_solve);
    let verdict = match result {
        SolveResult::Sat(model) => Verdict::Accept { witness: witness_order(&ir, &model) },
        SolveResult::Unsat(cycle) => {
            let detail = if cycle.is_empty() {
                "constraints are unsatisfiable".to_string()
            } else {
                let labels: Vec<String> = cycle.iter().map(|v| ir.var_label(*v)).collect();
                format!("dependency cycle {}", labels.join(" -> "))
            };
            Verdict::Reject(Counterexample { reason: RejectReason::Cycle, cycle: cycle_edges(&ir, &cycle), detail })
        }
        SolveResult::BudgetExceeded => Verdict::BudgetExceeded,
    };
    done(verdict, stats)
}

fn segment_reject(
    t: &Trace,
    spec: &IsolationSpec,
    seg: &BTreeSet<TxnId>,
    opts: &CheckOptions,
    stop: &AtomicBool,
) -> Option<CheckReport> {
    check_scoped(t, spec, Some(seg), opts, stop).ok().filter(|r| r.verdict.is_reject())
}

/// Checks a whole trace at `level`.
pub fn check(t: &Trace, level: IsolationLevel, opts: &CheckOptions) -> Result<CheckReport, CheckError> {
    check_with_spec(t, spec_for(level), opts)
}

pub fn check_with_spec(t: &Trace, spec: &IsolationSpec, opts: &CheckOptions) -> Result<CheckReport, CheckError> {
    if !opts.unsat_search {
        return check_scoped(t, spec, None, opts, &AtomicBool::new(false));
    }
    let plan = plan_segments(t, opts.segments, opts.seed);
    if plan.segments.len() <= 1 {
        return check_scoped(t, spec, None, opts, &AtomicBool::new(false));
    }
    let start = Instant::now();
    if par::concurrent() {
        race(t, spec, opts, plan.segments)
    } else {
        let stop = AtomicBool::new(false);
        let mut checked = 0;
        let outcome = unsat_search(
            &plan,
            |seg| {
                checked += 1;
                segment_reject(t, spec, seg, opts, &stop)
            },
            &stop,
        );
        let mut report = match outcome {
            UnsatOutcome::Reject { segment, mut report } => {
                report.stats.segment = Some(segment);
                report
            }
            UnsatOutcome::Inconclusive => check_scoped(t, spec, None, opts, &stop)?,
        };
        report.stats.segments_checked = checked;
        report.stats.total_ms = ms(start);
        Ok(report)
    }
}

enum Msg {
    Full(Result<CheckReport, CheckError>),
    Segment(usize, Option<CheckReport>),
}

/// Runs the full check and every segment at once; the first definitive
/// answer wins and the rest are told to stop.
fn race(
    t: &Trace,
    spec: &IsolationSpec,
    opts: &CheckOptions,
    segments: Vec<BTreeSet<TxnId>>,
) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let trace = Arc::new(t.clone());
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let nseg = segments.len();
    {
        let (trace, stop, tx, spec, opts) = (trace.clone(), stop.clone(), tx.clone(), *spec, opts.clone());
        std::thread::spawn(move || {
            let _ = tx.send(Msg::Full(check_scoped(&trace, &spec, None, &opts, &stop)));
        });
    }
    for (i, seg) in segments.into_iter().enumerate() {
        let (trace, stop, tx, spec, opts) = (trace.clone(), stop.clone(), tx.clone(), *spec, opts.clone());
        std::thread::spawn(move || {
            let _ = tx.send(Msg::Segment(i, segment_reject(&trace, &spec, &seg, &opts, &stop)));
        });
    }
    drop(tx);
    let mut checked = 0;
    let result = loop {
        match rx.recv() {
            Ok(Msg::Full(r)) => break r,
            Ok(Msg::Segment(i, Some(mut r))) => {
                r.stats.segment = Some(i);
                break Ok(r);
            }
            Ok(Msg::Segment(_, None)) => checked += 1,
            Err(_) => unreachable!("the full check always reports"),
        }
    };
    stop.store(true, Ordering::Relaxed);
    result.map(|mut r| {
        r.stats.segments_checked = checked.min(nseg);
        r.stats.total_ms = ms(start);
        r
    })
}

/// Checks many traces, in parallel when available.
pub fn check_batch(traces: &[Trace], level: IsolationLevel, opts: &CheckOptions) -> Vec<Result<CheckReport, CheckError>> {
    par::map(traces, |t| check(t, level, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, ToySetting};

    fn verdict(t: &Trace, level: IsolationLevel) -> Verdict {
        check(t, level, &CheckOptions::default()).unwrap().verdict
    }

    #[test]
    fn tau0_accepts_in_order() {
        assert_eq!(verdict(&fixtures::tau0(), IsolationLevel::Ser), Verdict::Accept { witness: vec![1, 2, 3] });
    }

    #[test]
    fn toy_setting_a_witness() {
        assert_eq!(
            verdict(&fixtures::toy(ToySetting::A), IsolationLevel::Ser),
            Verdict::Accept { witness: vec![1, 2, 3, 4] }
        );
    }

    #[test]
    fn lost_update_rejects_under_si() {
        let v = verdict(&fixtures::lost_update(), IsolationLevel::Si);
        let Verdict::Reject(cx) = v else { panic!("{v:?}") };
        assert_eq!(cx.reason, RejectReason::Cycle);
        let txns: BTreeSet<TxnRef> = cx.cycle.iter().flat_map(|e| [e.src.txn, e.dst.txn]).collect();
        assert_eq!(txns.len(), 2);
    }

    #[test]
    fn g1c_counterexample_names_sources() {
        let Verdict::Reject(cx) = verdict(&fixtures::g1c(), IsolationLevel::Rc) else { panic!() };
        assert!(cx.cycle.len() >= 2);
        assert!(cx.cycle.iter().all(|e| !e.source.is_empty()));
    }

    #[test]
    fn ablations_agree_on_corpus() {
        for (name, t) in fixtures::corpus() {
            for level in IsolationLevel::ALL {
                let mut verdicts = Vec::new();
                for (prune, prio) in [(true, true), (true, false), (false, true), (false, false)] {
                    let opts = CheckOptions { prune, prio, ..Default::default() };
                    match check(&t, level, &opts) {
                        Ok(r) => verdicts.push(r.verdict.as_str()),
                        Err(e) => verdicts.push(if matches!(e, CheckError::Asg(_)) { "error" } else { "other" }),
                    }
                }
                assert!(verdicts.iter().all(|v| *v == verdicts[0]), "{name} {level:?} {verdicts:?}");
            }
        }
    }

    #[test]
    fn unsat_search_agrees_with_full_check() {
        for (name, t) in fixtures::corpus() {
            let full = check(&t, IsolationLevel::Ser, &CheckOptions::default());
            let opts = CheckOptions { unsat_search: true, segments: 2, seed: 5, ..Default::default() };
            let seg = check(&t, IsolationLevel::Ser, &opts);
            match (full, seg) {
                (Ok(a), Ok(b)) => assert_eq!(a.verdict.as_str(), b.verdict.as_str(), "{name}"),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("{name}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn batch_matches_single() {
        let traces: Vec<Trace> = fixtures::corpus().into_iter().map(|(_, t)| t).collect();
        let batch = check_batch(&traces, IsolationLevel::Si, &CheckOptions::default());
        for (t, r) in traces.iter().zip(batch) {
            let single = check(t, IsolationLevel::Si, &CheckOptions::default());
            assert_eq!(r.map(|r| r.verdict), single.map(|r| r.verdict));
        }
    }
}
