// SPDX-License-Identifier: Apache-2.0

//! Lowering from the ASG to the IR: the dependency passes and the user
//! module hook.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::asg::{realtime_cover, Asg, Observed, ReadKind};
use crate::graph::{EdgeType, KeyId, LogicalEdge, TxnRef};
use crate::ir::{Ir, LogicExpr, Origin, Source, VarId};
use crate::trace::{Hints, Key, Trace, TxnId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("no transaction explains why T{txn} (op {seq}) did not observe key {key}")]
    NoExplanation { txn: TxnId, seq: u64, key: Key },
    #[error("module {module}: {message}")]
    Module { module: String, message: String },
    #[error("module {module} broke the IR contract: {detail}")]
    ModuleContractViolation { module: String, detail: String },
}

/// Read-only view handed to user modules.
pub struct ModuleContext<'a> {
    pub asg: &'a Asg,
    pub trace: &'a Trace,
}

/// A transformation run after the built-in passes. It may add edges,
/// superpositions and constraints, and must not retract known edges.
pub trait UserModule: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, ir: &mut Ir, ctx: &ModuleContext<'_>) -> Result<(), String>;
}

impl fmt::Debug for dyn UserModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UserModule({})", self.name())
    }
}

/// Ordered module list.
#[derive(Clone, Debug, Default)]
pub struct ModuleRegistry {
    modules: Vec<Arc<dyn UserModule>>,
}

impl ModuleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The built-in modules the hints ask for.
    pub fn for_hints(hints: &Hints) -> Self {
        let mut r = Self::new();
        if hints.session_order {
            r.register(Arc::new(SessionOrder));
        }
        if hints.real_time {
            r.register(Arc::new(RealTimeOrder));
        }
        if hints.unique_values {
            r.register(Arc::new(UniqueValues));
        }
        r
    }

    pub fn register(&mut self, m: Arc<dyn UserModule>) {
        self.modules.push(m);
    }

    pub fn modules(&self) -> &[Arc<dyn UserModule>] {
        &self.modules
    }
}

/// Orders consecutive committed transactions of each session.
pub struct SessionOrder;

impl UserModule for SessionOrder {
    fn name(&self) -> &str {
        "session_order"
    }

    fn run(&self, ir: &mut Ir, ctx: &ModuleContext<'_>) -> Result<(), String> {
        for ids in ctx.trace.sessions.values() {
            let members: Vec<TxnId> = ids.iter().copied().filter(|id| ctx.asg.txns.binary_search(id).is_ok()).collect();
            for w in members.windows(2) {
                let le = LogicalEdge::new(TxnRef::Txn(w[0]), TxnRef::Txn(w[1]), EdgeType::Session, None);
                ir.add_known(le, Source::Session).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }
}

/// Orders a transaction before every transaction that began after it
/// committed. A no-op for levels without real-time edges.
pub struct RealTimeOrder;

impl UserModule for RealTimeOrder {
    fn name(&self) -> &str {
        "real_time_order"
    }

    fn run(&self, ir: &mut Ir, ctx: &ModuleContext<'_>) -> Result<(), String> {
        if !ir.spec.admits(EdgeType::RealTime) {
            return Ok(());
        }
        let txns = ctx.asg.txns.iter().filter_map(|id| ctx.trace.transactions.get(id));
        for (a, b) in realtime_cover(txns) {
            let le = LogicalEdge::new(TxnRef::Txn(a), TxnRef::Txn(b), EdgeType::RealTime, None);
            ir.add_known(le, Source::RealTime).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Asserts that every read has a single candidate writer.
pub struct UniqueValues;

impl UserModule for UniqueValues {
    fn name(&self) -> &str {
        "unique_values"
    }

    fn run(&self, _ir: &mut Ir, ctx: &ModuleContext<'_>) -> Result<(), String> {
        for (k, obs, e) in ctx.asg.lineage_entries() {
            if let Observed::Value(v) = obs {
                if !e.is_internal() && e.cand_ws.len() > 1 {
                    return Err(format!(
                        "value {} of key {} has {} candidate writers",
                        ctx.asg.values.value(v),
                        ctx.asg.keys.key(k),
                        e.cand_ws.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Transitive closure of the hinted version order, per key.
#[derive(Clone, Debug, Default)]
pub struct VersionClosure {
    before: HashSet<(KeyId, TxnId, TxnId)>,
}

impl VersionClosure {
    pub fn new(asg: &Asg) -> Self {
        let mut before = HashSet::new();
        for (k, kw) in &asg.write_history {
            if kw.ver_order.is_empty() {
                continue;
            }
            let mut succ: BTreeMap<TxnId, Vec<TxnId>> = BTreeMap::new();
            for (a, b) in &kw.ver_order {
                succ.entry(*a).or_default().push(*b);
            }
            for &start in succ.keys() {
                let mut stack = vec![start];
                let mut seen = HashSet::new();
                while let Some(n) = stack.pop() {
                    for &m in succ.get(&n).into_iter().flatten() {
                        if seen.insert(m) {
                            before.insert((*k, start, m));
                            stack.push(m);
                        }
                    }
                }
            }
        }
        VersionClosure { before }
    }

    pub fn precedes(&self, key: KeyId, a: TxnId, b: TxnId) -> bool {
        self.before.contains(&(key, a, b))
    }
}

/// Copies the ASG's known graph into the IR.
pub fn copy_known(asg: &Asg, ir: &mut Ir) {
    for (e, source) in &asg.known {
        let v = ir.var_of_edge(*e, source.clone());
        ir.mark_known(v);
    }
}

/// Read dependencies: a known edge for a unique candidate writer, a
/// superposition over the candidates otherwise.
pub fn gen_read_dep(asg: &Asg, ir: &mut Ir) {
    for (k, _, e) in asg.lineage_entries() {
        if e.is_internal() {
            continue;
        }
        let reader = TxnRef::Txn(e.reader);
        let kind = e.kind.read_edge();
        let vars: Vec<VarId> = e
            .cand_ws
            .iter()
            .filter_map(|w| ir.var(LogicalEdge::new(*w, reader, kind, Some(k)), Source::ReadDep).ok())
            .collect();
        if vars.is_empty() {
            continue;
        }
        ir.add_superposition(
            vars.into_iter().map(LogicExpr::Var).collect(),
            Origin::Read { reader: e.reader, seq: e.seq, key: k },
        );
    }
}

/// Write dependencies: each pair of writers of a key not ordered by the
/// version order gets a two-way superposition.
pub fn gen_write_dep(asg: &Asg, ir: &mut Ir, closure: &VersionClosure) {
    for (&k, kw) in &asg.write_history {
        let mut writers: Vec<TxnId> = kw.wset.iter().map(|r| r.txn).collect();
        writers.sort_unstable();
        writers.dedup();
        for (i, &a) in writers.iter().enumerate() {
            for &b in &writers[i + 1..] {
                if closure.precedes(k, a, b) || closure.precedes(k, b, a) {
                    continue;
                }
                let ab = ir.var(LogicalEdge::new(TxnRef::Txn(a), TxnRef::Txn(b), EdgeType::WW, Some(k)), Source::WriteDep);
                let ba = ir.var(LogicalEdge::new(TxnRef::Txn(b), TxnRef::Txn(a), EdgeType::WW, Some(k)), Source::WriteDep);
                if let (Ok(ab), Ok(ba)) = (ab, ba) {
                    ir.add_superposition(
                        vec![LogicExpr::Var(ab), LogicExpr::Var(ba)],
                        Origin::WritePair { key: k, first: a, second: b },
                    );
                }
            }
        }
    }
}

enum Ww {
    Before,
    After,
    Var(VarId),
}

/// Emits `(W ->ww P) & (W ->wr R) => (R ->rw P)` for candidate writers `W`
/// and every other writer `P` of the key, simplified by what is known.
#[allow(clippy::too_many_arguments)]
fn derive_anti(
    asg: &Asg,
    ir: &mut Ir,
    closure: &VersionClosure,
    reader: TxnId,
    key: KeyId,
    candidates: &[TxnRef],
    kind: ReadKind,
    source: Source,
) {
    let anti = kind.anti_edge();
    if !ir.spec.admits(anti) {
        return;
    }
    let Some(kw) = asg.write_history.get(&key) else { return };
    let wr_known = candidates.len() == 1;
    for &w in candidates {
        let Ok(wr) = ir.var(LogicalEdge::new(w, TxnRef::Txn(reader), kind.read_edge(), Some(key)), source.clone())
        else {
            continue;
        };
        for p in kw.wset.iter().map(|r| r.txn) {
            if p == reader || TxnRef::Txn(p) == w {
                continue;
            }
            let ww = match w {
                TxnRef::Init => Ww::Before,
                TxnRef::Txn(wid) if closure.precedes(key, wid, p) => Ww::Before,
                TxnRef::Txn(wid) if closure.precedes(key, p, wid) => Ww::After,
                TxnRef::Txn(wid) => {
                    let le = LogicalEdge::new(TxnRef::Txn(wid), TxnRef::Txn(p), EdgeType::WW, Some(key));
                    match ir.var(le, Source::WriteDep) {
                        Ok(v) => Ww::Var(v),
                        Err(_) => continue,
                    }
                }
            };
            let Ok(rw) = ir.var(LogicalEdge::new(TxnRef::Txn(reader), TxnRef::Txn(p), anti, None), source.clone())
            else {
                continue;
            };
            match (wr_known, ww) {
                (_, Ww::After) => {}
                (true, Ww::Before) => ir.mark_known(rw),
                (true, Ww::Var(v)) => ir.add_implication(vec![v], rw),
                (false, Ww::Before) => ir.add_implication(vec![wr], rw),
                (false, Ww::Var(v)) => ir.add_implication(vec![v, wr], rw),
            }
        }
    }
}

/// Anti-dependencies of every external read and range-query item.
pub fn gen_anti_dep(asg: &Asg, ir: &mut Ir, closure: &VersionClosure) {
    for (k, _, e) in asg.lineage_entries() {
        if e.is_internal() {
            continue;
        }
        derive_anti(asg, ir, closure, e.reader, k, &e.cand_ws, e.kind, Source::AntiDep);
    }
}

/// Phantom ambiguity: an in-range key a query skipped was either never
/// written or deleted before the query.
pub fn gen_predicate_dep(asg: &Asg, ir: &mut Ir, closure: &VersionClosure) -> Result<(), AnalysisError> {
    for p in &asg.phantoms {
        if p.candidates.is_empty() {
            return Err(AnalysisError::NoExplanation { txn: p.reader, seq: p.seq, key: asg.keys.key(p.key).clone() });
        }
        let reader = TxnRef::Txn(p.reader);
        let vars: Vec<VarId> = p
            .candidates
            .iter()
            .filter_map(|w| {
                ir.var(LogicalEdge::new(*w, reader, p.kind.read_edge(), Some(p.key)), Source::PredicateDep).ok()
            })
            .collect();
        if vars.is_empty() {
            continue;
        }
        ir.add_superposition(
            vars.into_iter().map(LogicExpr::Var).collect(),
            Origin::Phantom { reader: p.reader, seq: p.seq, key: p.key },
        );
        derive_anti(asg, ir, closure, p.reader, p.key, &p.candidates, p.kind, Source::PredicateDep);
    }
    Ok(())
}

fn run_module(m: &dyn UserModule, ir: &mut Ir, ctx: &ModuleContext<'_>) -> Result<(), AnalysisError> {
    let before = ir.known.clone();
    let name = m.name().to_string();
    m.run(ir, ctx).map_err(|message| AnalysisError::Module { module: name.clone(), message })?;
    let now: HashSet<VarId> = ir.known.iter().copied().collect();
    if let Some(v) = before.iter().find(|v| !now.contains(v)) {
        let detail = if (*v as usize) < ir.vars.len() {
            format!("known edge {} was removed", ir.var_label(*v))
        } else {
            format!("known variable {v} was removed")
        };
        return Err(AnalysisError::ModuleContractViolation { module: name, detail });
    }
    ir.well_formed().map_err(|detail| AnalysisError::ModuleContractViolation { module: name, detail })?;
    ir.reindex();
    Ok(())
}

/// Runs the dependency passes and then each module in order.
pub fn gen_ir(asg: &Asg, trace: &Trace, modules: &ModuleRegistry) -> Result<Ir, AnalysisError> {
    let mut ir = Ir::new(asg.spec, asg.nodes.clone(), Arc::new(asg.keys.clone()));
    copy_known(asg, &mut ir);
    let closure = VersionClosure::new(asg);
    gen_read_dep(asg, &mut ir);
    gen_write_dep(asg, &mut ir, &closure);
    gen_anti_dep(asg, &mut ir, &closure);
    gen_predicate_dep(asg, &mut ir, &closure)?;
    let ctx = ModuleContext { asg, trace };
    for m in modules.modules() {
        run_module(m.as_ref(), &mut ir, &ctx)?;
    }
    Ok(ir)
}
