// SPDX-License-Identifier: Apache-2.0

//! DPLL search over edge variables with exactly-one propagation, watched
//! clauses, optional conflict-driven learning, and an incremental
//! acyclicity theory. With learning, blocks are decided by conflict
//! activity with saved phases and Luby restarts; without it, in plan order.

pub mod cnf;
pub mod encode;
mod order;
pub mod theory;

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crate::graph::TxnRef;
use crate::ir::{Ir, Origin, VarId};
use crate::optimizer::PriorityOrder;
use encode::{Encoding, Lit};
use order::{luby, BlockOrder};
use theory::Theory;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Budget {
    pub timeout: Option<Duration>,
    pub max_decisions: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub learning: bool,
    pub budget: Budget,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { learning: true, budget: Budget::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveResult {
    /// Truth value of every edge variable.
    Sat(Vec<bool>),
    /// The last cycle that blocked the search, as edge variables in order.
    /// Empty when the final contradiction was not a cycle.
    Unsat(Vec<VarId>),
    BudgetExceeded,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub learned: u64,
    pub theory_conflicts: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reason {
    Decision,
    Clause(u32),
    /// Forced false because this literal of a shared exactly-one block is true.
    AtMostOne(Lit),
    /// Last open literal of an exactly-one block.
    AtLeastOne(u32),
}

const UNASSIGNED: i8 = -1;
/// Conflicts per Luby unit between restarts.
const RESTART_UNIT: u64 = 100;

struct Search<'a> {
    enc: &'a Encoding,
    opts: SolveOptions,
    value: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Reason>,
    processed: Vec<bool>,
    in_theory: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,

    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<u32>>,
    /// Per variable: (block, position of the variable's literal).
    occurs: Vec<Vec<(u32, u32)>>,
    ntrue: Vec<u32>,
    nfalse: Vec<u32>,

    theory: Theory,
    last_cycle: Vec<VarId>,

    /// Superposition blocks in decision order.
    plan: Vec<u32>,
    /// Preferred literal order within each block.
    prefer: Vec<Vec<u32>>,
    cursor: usize,
    var_cursor: u32,
    cursor_at: Vec<(usize, u32)>,
    flipped: Vec<bool>,
    /// Adaptive block order, used with learning.
    order: BlockOrder,
    /// Position of each block's last true literal.
    saved: Vec<u32>,
    restarts: u64,
    since_restart: u64,

    seen: Vec<bool>,
    stats: SolveStats,
}

impl<'a> Search<'a> {
    fn lit_value(&self, l: Lit) -> i8 {
        let v = self.value[l.var() as usize];
        if v == UNASSIGNED {
            v
        } else {
            v ^ l.is_neg() as i8
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, l: Lit, r: Reason) {
        let v = l.var() as usize;
        debug_assert_eq!(self.value[v], UNASSIGNED);
        self.value[v] = (!l.is_neg()) as i8;
        self.level[v] = self.decision_level();
        self.reason[v] = r;
        self.trail.push(l);
    }

    fn add_clause(&mut self, c: Vec<Lit>) -> u32 {
        let id = self.clauses.len() as u32;
        if c.len() >= 2 {
            self.watches[(!c[0]).0 as usize].push(id);
            self.watches[(!c[1]).0 as usize].push(id);
        }
        self.clauses.push(c);
        id
    }

    /// Processes the trail. Returns a conflict clause whose literals are all
    /// false.
    fn propagate(&mut self) -> Option<Vec<Lit>> {
        let enc = self.enc;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let v = p.var();
            self.processed[v as usize] = true;
            let mut conflict = None;

            if !p.is_neg() && self.theory.has_edge(v) {
                match self.theory.add(v) {
                    Ok(()) => self.in_theory[v as usize] = true,
                    Err(cycle) => {
                        self.stats.theory_conflicts += 1;
                        conflict = Some(cycle.iter().map(|x| Lit::neg(*x)).collect());
                        self.last_cycle = cycle;
                    }
                }
            }

            // Counters are updated even after a conflict so that undo stays
            // symmetric.
            for i in 0..self.occurs[v as usize].len() {
                let (b, pos) = self.occurs[v as usize][i];
                let block = &enc.exactly_one[b as usize];
                let lit = block[pos as usize];
                if lit == p {
                    self.ntrue[b as usize] += 1;
                    if conflict.is_some() {
                        continue;
                    }
                    if self.ntrue[b as usize] > 1 {
                        let other = block
                            .iter()
                            .find(|q| **q != p && self.lit_value(**q) == 1 && self.processed[q.var() as usize])
                            .expect("a second true literal");
                        conflict = Some(vec![!p, !*other]);
                        continue;
                    }
                    for j in 0..block.len() {
                        let q = block[j];
                        if q != p && self.lit_value(q) == UNASSIGNED {
                            self.enqueue(!q, Reason::AtMostOne(p));
                        }
                    }
                } else {
                    self.nfalse[b as usize] += 1;
                    if conflict.is_some() || self.ntrue[b as usize] > 0 {
                        continue;
                    }
                    let nf = self.nfalse[b as usize] as usize;
                    if nf == block.len() {
                        conflict = Some(block.clone());
                    } else if nf + 1 == block.len() {
                        if let Some(q) = block.iter().find(|q| self.lit_value(**q) == UNASSIGNED) {
                            let q = *q;
                            self.enqueue(q, Reason::AtLeastOne(b));
                        }
                    }
                }
            }

            if conflict.is_none() {
                conflict = self.propagate_watches(p);
            }
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    /// Visits clauses watching `!p`, which just became false.
    fn propagate_watches(&mut self, p: Lit) -> Option<Vec<Lit>> {
        let false_lit = !p;
        let mut ws = std::mem::take(&mut self.watches[p.0 as usize]);
        let mut i = 0;
        let mut j = 0;
        let mut conflict = None;
        while i < ws.len() {
            let cid = ws[i];
            i += 1;
            let c = &mut self.clauses[cid as usize];
            if c[0] == false_lit {
                c.swap(0, 1);
            }
            let first = c[0];
            let fv = {
                let v = self.value[first.var() as usize];
                if v == UNASSIGNED {
                    v
                } else {
                    v ^ first.is_neg() as i8
                }
            };
            if fv == 1 {
                ws[j] = cid;
                j += 1;
                continue;
            }
            let mut moved = false;
            for k in 2..c.len() {
                let l = c[k];
                let lv = self.value[l.var() as usize];
                if lv == UNASSIGNED || (lv ^ l.is_neg() as i8) == 1 {
                    c.swap(1, k);
                    self.watches[(!c[1]).0 as usize].push(cid);
                    moved = true;
                    break;
                }
            }
            if moved {
                continue;
            }
            ws[j] = cid;
            j += 1;
            if fv == 0 {
                conflict = Some(self.clauses[cid as usize].clone());
                while i < ws.len() {
                    ws[j] = ws[i];
                    j += 1;
                    i += 1;
                }
            } else {
                self.enqueue(first, Reason::Clause(cid));
            }
        }
        ws.truncate(j);
        self.watches[p.0 as usize] = ws;
        conflict
    }

    fn backtrack(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        while self.trail.len() > lim {
            let l = self.trail.pop().expect("non-empty trail");
            let v = l.var() as usize;
            if self.opts.learning {
                for &(b, pos) in &self.occurs[v] {
                    if self.enc.exactly_one[b as usize][pos as usize] == l {
                        self.saved[b as usize] = pos;
                    }
                    self.order.insert(b);
                }
            }
            if self.processed[v] {
                for &(b, pos) in &self.occurs[v] {
                    if self.enc.exactly_one[b as usize][pos as usize] == l {
                        self.ntrue[b as usize] -= 1;
                    } else {
                        self.nfalse[b as usize] -= 1;
                    }
                }
                if self.in_theory[v] {
                    self.theory.remove(v as VarId);
                    self.in_theory[v] = false;
                }
                self.processed[v] = false;
            }
            self.value[v] = UNASSIGNED;
        }
        self.qhead = self.trail.len();
        let (c, vc) = self.cursor_at[level as usize];
        self.cursor = c;
        self.var_cursor = vc;
        self.trail_lim.truncate(level as usize);
        self.cursor_at.truncate(level as usize);
        self.flipped.truncate(level as usize);
    }

    /// False literals that forced the assignment of `v`.
    fn reason_lits(&self, v: VarId, out: &mut Vec<Lit>) {
        out.clear();
        match self.reason[v as usize] {
            Reason::Decision => {}
            Reason::Clause(c) => out.extend(self.clauses[c as usize].iter().filter(|l| l.var() != v)),
            Reason::AtMostOne(p) => out.push(!p),
            Reason::AtLeastOne(b) => out.extend(self.enc.exactly_one[b as usize].iter().filter(|l| l.var() != v)),
        }
    }

    /// First-UIP learning. Returns the learned clause, asserting literal
    /// first, and the level to jump back to.
    fn analyze(&mut self, conflict: Vec<Lit>) -> (Vec<Lit>, u32) {
        let cur = self.decision_level();
        let mut learnt = vec![Lit(0)];
        let mut counter = 0;
        let mut clause = conflict;
        let mut idx = self.trail.len();
        let mut buf = Vec::new();
        let mut touched = Vec::new();
        let uip = loop {
            for &q in &clause {
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    touched.push(v);
                    if self.level[v] == cur {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            let p = loop {
                idx -= 1;
                let p = self.trail[idx];
                if self.seen[p.var() as usize] {
                    break p;
                }
            };
            self.seen[p.var() as usize] = false;
            counter -= 1;
            if counter == 0 {
                break p;
            }
            self.reason_lits(p.var(), &mut buf);
            clause = std::mem::take(&mut buf);
        };
        for v in touched {
            self.seen[v] = false;
            for &(b, _) in &self.occurs[v] {
                self.order.bump(b);
            }
        }
        self.order.decay();
        learnt[0] = !uip;
        let mut back = 0;
        if learnt.len() > 1 {
            let (mi, ml) = learnt[1..]
                .iter()
                .enumerate()
                .map(|(i, l)| (i + 1, self.level[l.var() as usize]))
                .max_by_key(|x| x.1)
                .expect("non-empty tail");
            learnt.swap(1, mi);
            back = ml;
        }
        (learnt, back)
    }

    fn new_level(&mut self) {
        self.trail_lim.push(self.trail.len());
        self.cursor_at.push((self.cursor, self.var_cursor));
        self.flipped.push(false);
    }

    fn pick(&mut self) -> Option<Lit> {
        let enc = self.enc;
        if self.opts.learning {
            while let Some(b) = self.order.pop() {
                let block = &enc.exactly_one[b as usize];
                if block.iter().any(|l| self.lit_value(*l) == 1) {
                    continue;
                }
                let saved = block.get(self.saved[b as usize] as usize).copied();
                let open: Vec<Lit> = saved
                    .into_iter()
                    .chain(self.prefer[b as usize].iter().map(|i| block[*i as usize]))
                    .filter(|l| self.lit_value(*l) == UNASSIGNED)
                    .collect();
                let pick = open.iter().find(|l| self.theory.forward(l.var())).or(open.first());
                return Some(*pick.expect("an open block has an unassigned literal"));
            }
        }
        while self.cursor < self.plan.len() {
            let b = self.plan[self.cursor] as usize;
            let block = &enc.exactly_one[b];
            if block.iter().any(|l| self.lit_value(*l) == 1) {
                self.cursor += 1;
                continue;
            }
            let pick = self.prefer[b].iter().map(|i| block[*i as usize]).find(|l| self.lit_value(*l) == UNASSIGNED);
            return Some(pick.expect("an open block has an unassigned literal"));
        }
        while self.var_cursor < self.enc.num_vars {
            let v = self.var_cursor;
            if self.value[v as usize] == UNASSIGNED {
                return Some(Lit::neg(v));
            }
            self.var_cursor += 1;
        }
        None
    }

    fn resolve_conflict(&mut self, conflict: Vec<Lit>) -> bool {
        self.stats.conflicts += 1;
        if self.decision_level() == 0 {
            return false;
        }
        if self.opts.learning {
            let (learnt, back) = self.analyze(conflict);
            self.backtrack(back);
            self.stats.learned += 1;
            let asserting = learnt[0];
            let id = self.add_clause(learnt);
            self.enqueue(asserting, Reason::Clause(id));
            self.since_restart += 1;
            true
        } else {
            loop {
                let lvl = self.decision_level();
                if lvl == 0 {
                    return false;
                }
                let dec = self.trail[self.trail_lim[lvl as usize - 1]];
                let was_flipped = self.flipped[lvl as usize - 1];
                self.backtrack(lvl - 1);
                if !was_flipped {
                    self.new_level();
                    *self.flipped.last_mut().expect("level") = true;
                    self.enqueue(!dec, Reason::Decision);
                    return true;
                }
            }
        }
    }

    fn run(&mut self, stop: &AtomicBool) -> SolveResult {
        let start = Instant::now();
        let budget = self.opts.budget;
        let mut ticks = 0u32;
        loop {
            if let Some(conflict) = self.propagate() {
                if !self.resolve_conflict(conflict) {
                    return SolveResult::Unsat(std::mem::take(&mut self.last_cycle));
                }
            } else {
                if self.opts.learning && self.since_restart >= luby(self.restarts + 1) * RESTART_UNIT {
                    self.restarts += 1;
                    self.since_restart = 0;
                    self.backtrack(0);
                    continue;
                }
                let Some(lit) = self.pick() else {
                    let model = (0..self.enc.num_edge_vars).map(|v| self.value[v as usize] == 1).collect();
                    return SolveResult::Sat(model);
                };
                self.stats.decisions += 1;
                if budget.max_decisions.is_some_and(|m| self.stats.decisions > m) {
                    return SolveResult::BudgetExceeded;
                }
                self.new_level();
                self.enqueue(lit, Reason::Decision);
            }
            ticks += 1;
            if ticks % 256 == 0
                && (stop.load(Ordering::Relaxed) || budget.timeout.is_some_and(|t| start.elapsed() > t))
            {
                return SolveResult::BudgetExceeded;
            }
        }
    }
}

/// Endpoint node indices of every edge variable that takes part in the
/// acyclicity check. Edges touching INIT are left out when nothing points
/// into INIT, since INIT then cannot lie on a cycle.
pub fn theory_edges(ir: &Ir) -> Vec<Option<(u32, u32)>> {
    let ends = ir.var_endpoints();
    let is_init = |i: u32| ir.nodes[i as usize].txn == TxnRef::Init;
    let into_init = ends.iter().any(|(_, b)| is_init(*b));
    ends.into_iter().map(|(a, b)| (into_init || !(is_init(a) || is_init(b))).then_some((a, b))).collect()
}

/// Decision order over superpositions and preferred possibility order
/// within each.
fn plan(ir: &Ir, enc: &Encoding, prio: Option<&PriorityOrder>) -> (Vec<u32>, Vec<Vec<u32>>) {
    let ends = ir.var_endpoints();
    let edge_of = |l: Lit| (l.var() < enc.num_edge_vars && !l.is_neg()).then(|| ends[l.var() as usize]);
    let first_edge = |p: &crate::ir::LogicExpr, l: Lit| {
        edge_of(l).or_else(|| {
            let mut vs = Vec::new();
            p.vars(&mut vs);
            vs.first().map(|v| ends[*v as usize])
        })
    };
    let n = enc.exactly_one.len();
    let Some(prio) = prio else {
        return ((0..n as u32).collect(), enc.exactly_one.iter().map(|b| (0..b.len() as u32).collect()).collect());
    };
    let rank = |x: u32| prio.rank[x as usize];
    let mut keyed: Vec<(u32, u32)> = Vec::with_capacity(n);
    let mut prefer = Vec::with_capacity(n);
    for (b, s) in ir.superpositions.iter().enumerate() {
        let block = &enc.exactly_one[b];
        let edges: Vec<Option<(u32, u32)>> =
            s.possibilities.iter().zip(block).map(|(p, l)| first_edge(p, *l)).collect();
        let top = edges.iter().flatten().map(|(a, c)| rank(*a).max(rank(*c))).max().unwrap_or(0);
        keyed.push((top, b as u32));
        let reads = matches!(s.origin, Origin::Read { .. } | Origin::Phantom { .. });
        let mut order: Vec<u32> = (0..block.len() as u32).collect();
        order.sort_by_key(|i| match edges[*i as usize] {
            Some((a, c)) => {
                let backward = rank(a) >= rank(c);
                let src = if reads { u32::MAX - rank(a) } else { 0 };
                (backward, src, *i)
            }
            None => (true, u32::MAX, *i),
        });
        prefer.push(order);
    }
    keyed.sort_unstable();
    (keyed.into_iter().map(|(_, b)| b).collect(), prefer)
}

/// Checks a model against the IR directly: known and refuted edges, one
/// possibility per superposition, implications, constraints, and acyclicity.
pub fn model_satisfies(ir: &Ir, model: &[bool]) -> Result<(), String> {
    let val = |v: VarId| model[v as usize];
    if let Some(v) = ir.known.iter().find(|v| !val(**v)) {
        return Err(format!("known edge {} is false", ir.var_label(*v)));
    }
    if let Some(v) = ir.refuted.iter().find(|v| val(**v)) {
        return Err(format!("refuted edge {} is true", ir.var_label(*v)));
    }
    for s in &ir.superpositions {
        let n = s.possibilities.iter().filter(|p| p.eval(&val)).count();
        if n != 1 {
            return Err(format!("superposition {} has {n} true possibilities", s.id));
        }
    }
    for i in &ir.implications {
        if i.antecedents.iter().all(|a| val(*a)) && !val(i.consequent) {
            return Err(format!("implication {} is violated", i.id));
        }
    }
    if ir.constraints.iter().any(|c| !c.eval(&val)) {
        return Err("a constraint is violated".into());
    }
    let ends = ir.var_endpoints();
    let edges: Vec<(u32, u32)> = ends.iter().zip(model).filter(|(_, on)| **on).map(|(e, _)| *e).collect();
    crate::optimizer::Reachability::compute(ir.nodes.len(), &edges)
        .map(|_| ())
        .map_err(|_| "true edges form a cycle".into())
}

/// Decides whether the IR has an acyclic assignment.
pub fn solve(ir: &Ir, prio: Option<&PriorityOrder>, opts: SolveOptions, stop: &AtomicBool) -> (SolveResult, SolveStats) {
    let enc = Encoding::new(ir);
    solve_encoding(ir, &enc, prio, opts, stop)
}

pub fn solve_encoding(
    ir: &Ir,
    enc: &Encoding,
    prio: Option<&PriorityOrder>,
    opts: SolveOptions,
    stop: &AtomicBool,
) -> (SolveResult, SolveStats) {
    let nv = enc.num_vars as usize;
    let mut occurs = vec![Vec::new(); nv];
    for (b, block) in enc.exactly_one.iter().enumerate() {
        for (i, l) in block.iter().enumerate() {
            occurs[l.var() as usize].push((b as u32, i as u32));
        }
    }
    let (plan, prefer) = plan(ir, enc, prio);
    let order = BlockOrder::new(enc.exactly_one.len(), &plan);
    let theory = Theory::new(ir.nodes.len(), &theory_edges(ir), prio.map(|p| p.rank.as_slice()));
    let mut s = Search {
        enc,
        opts,
        value: vec![UNASSIGNED; nv],
        level: vec![0; nv],
        reason: vec![Reason::Decision; nv],
        processed: vec![false; nv],
        in_theory: vec![false; nv],
        trail: Vec::with_capacity(nv),
        trail_lim: Vec::new(),
        qhead: 0,
        clauses: Vec::with_capacity(enc.clauses.len()),
        watches: vec![Vec::new(); nv * 2],
        occurs,
        ntrue: vec![0; enc.exactly_one.len()],
        nfalse: vec![0; enc.exactly_one.len()],
        theory,
        last_cycle: Vec::new(),
        plan,
        prefer,
        cursor: 0,
        var_cursor: 0,
        cursor_at: Vec::new(),
        flipped: Vec::new(),
        order,
        saved: vec![u32::MAX; enc.exactly_one.len()],
        restarts: 0,
        since_restart: 0,
        seen: vec![false; nv],
        stats: SolveStats::default(),
    };

    let unsat = |s: &mut Search| (SolveResult::Unsat(std::mem::take(&mut s.last_cycle)), s.stats);
    let mut units: Vec<Lit> = enc.units.clone();
    for (c, _) in &enc.clauses {
        match c.len() {
            0 => return unsat(&mut s),
            1 => units.push(c[0]),
            _ => {
                s.add_clause(c.clone());
            }
        }
    }
    for block in &enc.exactly_one {
        if block.is_empty() {
            return unsat(&mut s);
        }
        if block.len() == 1 {
            units.push(block[0]);
        }
    }
    for l in units {
        match s.lit_value(l) {
            1 => {}
            0 => return unsat(&mut s),
            _ => s.enqueue(l, Reason::Decision),
        }
        if s.propagate().is_some() {
            return unsat(&mut s);
        }
    }
    let r = s.run(stop);
    (r, s.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{gen_ir, ModuleRegistry};
    use crate::asg::build_asg;
    use crate::fixtures::{self, ToySetting};
    use crate::isolation::{spec_for, IsolationLevel};
    use crate::optimizer::prioritize;
    use crate::trace::Trace;

    fn ir_of(t: &Trace, level: IsolationLevel) -> Option<Ir> {
        let asg = build_asg(t, spec_for(level)).ok()?;
        gen_ir(&asg, t, &ModuleRegistry::for_hints(&t.hints)).ok()
    }

    fn run(ir: &Ir, learning: bool, with_prio: bool) -> SolveResult {
        let prio = if with_prio { prioritize(ir).ok() } else { None };
        let opts = SolveOptions { learning, budget: Budget::default() };
        solve(ir, prio.as_ref(), opts, &AtomicBool::new(false)).0
    }

    fn valid_model(ir: &Ir, model: &[bool]) -> bool {
        model_satisfies(ir, model).is_ok()
    }

    #[test]
    fn toy_settings_accept() {
        for setting in [ToySetting::A, ToySetting::B, ToySetting::C, ToySetting::D] {
            let ir = ir_of(&fixtures::toy(setting), IsolationLevel::Ser).unwrap();
            match run(&ir, true, true) {
                SolveResult::Sat(m) => assert!(valid_model(&ir, &m), "{setting:?}"),
                other => panic!("{setting:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn g1c_rejects_with_two_edge_cycle() {
        let ir = ir_of(&fixtures::g1c(), IsolationLevel::Ser).unwrap();
        match run(&ir, true, false) {
            SolveResult::Unsat(cycle) => assert_eq!(cycle.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn learning_does_not_change_verdicts() {
        for (name, t) in fixtures::corpus() {
            for level in IsolationLevel::ALL {
                let Some(ir) = ir_of(&t, level) else { continue };
                let outcomes: Vec<bool> = [(true, true), (true, false), (false, true), (false, false)]
                    .into_iter()
                    .map(|(l, p)| match run(&ir, l, p) {
                        SolveResult::Sat(m) => {
                            assert!(valid_model(&ir, &m), "{name} {level:?}");
                            true
                        }
                        SolveResult::Unsat(_) => false,
                        SolveResult::BudgetExceeded => panic!("budget"),
                    })
                    .collect();
                assert!(outcomes.iter().all(|o| *o == outcomes[0]), "{name} {level:?}: {outcomes:?}");
            }
        }
    }

    #[test]
    fn decision_budget_is_enforced() {
        let ir = ir_of(&fixtures::toy(ToySetting::D), IsolationLevel::Ser).unwrap();
        let opts = SolveOptions { learning: true, budget: Budget { timeout: None, max_decisions: Some(0) } };
        let (r, _) = solve(&ir, None, opts, &AtomicBool::new(false));
        assert_eq!(r, SolveResult::BudgetExceeded);
    }

    #[test]
    fn deterministic() {
        let ir = ir_of(&fixtures::toy(ToySetting::D), IsolationLevel::Ser).unwrap();
        assert_eq!(run(&ir, true, true), run(&ir, true, true));
    }
}
