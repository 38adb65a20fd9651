// SPDX-License-Identifier: Apache-2.0

//! Low-level IR: a graph of known edges, superpositions over edge variables,
//! implications, and free-form logical constraints.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::asg::KeyTable;
use crate::graph::{Edge, KeyId, LogicalEdge, NodeId};
use crate::isolation::{IsolationSpec, SpecError};
use crate::trace::TxnId;

pub type VarId = u32;

/// The pass or module that introduced an edge variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    ReadDep,
    WriteDep,
    VersionOrder,
    AntiDep,
    PredicateDep,
    Session,
    RealTime,
    Intra,
    Module(Arc<str>),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::ReadDep => f.write_str("read_dep"),
            Source::WriteDep => f.write_str("write_dep"),
            Source::VersionOrder => f.write_str("version_order"),
            Source::AntiDep => f.write_str("anti_dep"),
            Source::PredicateDep => f.write_str("predicate_dep"),
            Source::Session => f.write_str("session"),
            Source::RealTime => f.write_str("real_time"),
            Source::Intra => f.write_str("intra"),
            Source::Module(name) => write!(f, "module:{name}"),
        }
    }
}

/// Where a superposition came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Read { reader: TxnId, seq: u64, key: KeyId },
    WritePair { key: KeyId, first: TxnId, second: TxnId },
    Phantom { reader: TxnId, seq: u64, key: KeyId },
    Module(Arc<str>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeVar {
    pub edge: Edge,
    pub source: Source,
    /// Superposition that first mentioned the variable.
    pub superposition: Option<u32>,
    /// Implication that first derived the variable.
    pub implication: Option<u32>,
}

impl EdgeVar {
    /// Provenance label used in counterexamples.
    pub fn provenance(&self, known: bool) -> String {
        match (known, self.superposition, self.implication) {
            (true, _, _) => format!("{}", self.source),
            (false, Some(s), _) => format!("{}/superposition#{s}", self.source),
            (false, None, Some(i)) => format!("{}/implication#{i}", self.source),
            (false, None, None) => format!("{}", self.source),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LogicExpr {
    Const(bool),
    Var(VarId),
    And(Vec<LogicExpr>),
    Or(Vec<LogicExpr>),
    Not(Box<LogicExpr>),
    Implies(Box<LogicExpr>, Box<LogicExpr>),
}

impl LogicExpr {
    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            LogicExpr::Const(_) => {}
            LogicExpr::Var(v) => out.push(*v),
            LogicExpr::And(xs) | LogicExpr::Or(xs) => xs.iter().for_each(|x| x.vars(out)),
            LogicExpr::Not(x) => x.vars(out),
            LogicExpr::Implies(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    /// Variables whose truth the expression asserts, when it is a plain
    /// variable or a conjunction of them.
    pub fn conjuncts(&self) -> Option<Vec<VarId>> {
        match self {
            LogicExpr::Var(v) => Some(vec![*v]),
            LogicExpr::And(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    out.extend(x.conjuncts()?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    pub fn eval(&self, value: &dyn Fn(VarId) -> bool) -> bool {
        match self {
            LogicExpr::Const(b) => *b,
            LogicExpr::Var(v) => value(*v),
            LogicExpr::And(xs) => xs.iter().all(|x| x.eval(value)),
            LogicExpr::Or(xs) => xs.iter().any(|x| x.eval(value)),
            LogicExpr::Not(x) => !x.eval(value),
            LogicExpr::Implies(a, b) => !a.eval(value) || b.eval(value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Superposition {
    pub id: u32,
    pub possibilities: Vec<LogicExpr>,
    pub origin: Origin,
}

/// `antecedents` all true forces `consequent` true.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Implication {
    pub id: u32,
    pub antecedents: Vec<VarId>,
    pub consequent: VarId,
}

#[derive(Clone, Debug)]
pub struct Ir {
    pub spec: IsolationSpec,
    pub nodes: Vec<NodeId>,
    pub keys: Arc<KeyTable>,
    pub vars: Vec<EdgeVar>,
    index: HashMap<Edge, VarId>,
    pub known: Vec<VarId>,
    is_known: Vec<bool>,
    /// Variables shown false before solving.
    pub refuted: Vec<VarId>,
    pub superpositions: Vec<Superposition>,
    supp_index: HashSet<Vec<LogicExpr>>,
    pub implications: Vec<Implication>,
    impl_index: HashSet<(Vec<VarId>, VarId)>,
    /// Extra constraints asserted true.
    pub constraints: Vec<LogicExpr>,
}

impl Ir {
    pub fn new(spec: IsolationSpec, nodes: Vec<NodeId>, keys: Arc<KeyTable>) -> Self {
        Ir {
            spec,
            nodes,
            keys,
            vars: Vec::new(),
            index: HashMap::new(),
            known: Vec::new(),
            is_known: Vec::new(),
            refuted: Vec::new(),
            superpositions: Vec::new(),
            supp_index: HashSet::new(),
            implications: Vec::new(),
            impl_index: HashSet::new(),
            constraints: Vec::new(),
        }
    }

    pub fn var_id(&self, e: &Edge) -> Option<VarId> {
        self.index.get(e).copied()
    }

    /// Registers (or finds) the variable of a logical edge under this IR's
    /// node model.
    pub fn var(&mut self, le: LogicalEdge, source: Source) -> Result<VarId, SpecError> {
        let edge = self.spec.rewrite_edge(&le)?;
        Ok(self.var_of_edge(edge, source))
    }

    pub fn var_of_edge(&mut self, edge: Edge, source: Source) -> VarId {
        if let Some(v) = self.index.get(&edge) {
            return *v;
        }
        let id = self.vars.len() as VarId;
        self.vars.push(EdgeVar { edge, source, superposition: None, implication: None });
        self.is_known.push(false);
        self.index.insert(edge, id);
        id
    }

    pub fn is_known(&self, v: VarId) -> bool {
        self.is_known[v as usize]
    }

    pub fn mark_known(&mut self, v: VarId) {
        if !self.is_known[v as usize] {
            self.is_known[v as usize] = true;
            self.known.push(v);
        }
    }

    pub fn add_known(&mut self, le: LogicalEdge, source: Source) -> Result<VarId, SpecError> {
        let v = self.var(le, source)?;
        self.mark_known(v);
        Ok(v)
    }

    /// Adds a superposition. A single possibility is asserted directly;
    /// a possibility set already present is not added twice.
    pub fn add_superposition(&mut self, possibilities: Vec<LogicExpr>, origin: Origin) -> Option<u32> {
        assert!(!possibilities.is_empty(), "a superposition needs at least one possibility");
        if possibilities.len() == 1 {
            let p = possibilities.into_iter().next().expect("one possibility");
            match p.conjuncts() {
                Some(vs) => vs.into_iter().for_each(|v| self.mark_known(v)),
                None => self.constraints.push(p),
            }
            return None;
        }
        if !self.supp_index.insert(possibilities.clone()) {
            return None;
        }
        let id = self.superpositions.len() as u32;
        let mut vs = Vec::new();
        possibilities.iter().for_each(|p| p.vars(&mut vs));
        for v in vs {
            let ev = &mut self.vars[v as usize];
            ev.superposition.get_or_insert(id);
        }
        self.superpositions.push(Superposition { id, possibilities, origin });
        Some(id)
    }

    pub fn add_implication(&mut self, mut antecedents: Vec<VarId>, consequent: VarId) {
        antecedents.sort_unstable();
        antecedents.dedup();
        if antecedents.is_empty() {
            self.mark_known(consequent);
            return;
        }
        if !self.impl_index.insert((antecedents.clone(), consequent)) {
            return;
        }
        let id = self.implications.len() as u32;
        self.vars[consequent as usize].implication.get_or_insert(id);
        self.implications.push(Implication { id, antecedents, consequent });
    }

    pub fn add_constraint(&mut self, e: LogicExpr) {
        self.constraints.push(e);
    }

    /// Checks the structural invariants modules must preserve.
    pub fn well_formed(&self) -> Result<(), String> {
        let n = self.vars.len() as VarId;
        let ok = |v: &VarId| *v < n;
        if self.known.iter().any(|v| !ok(v)) || self.refuted.iter().any(|v| !ok(v)) {
            return Err("known edge references an unregistered variable".into());
        }
        for s in &self.superpositions {
            if s.possibilities.len() < 2 {
                return Err(format!("superposition {} has fewer than two possibilities", s.id));
            }
            let mut vs = Vec::new();
            s.possibilities.iter().for_each(|p| p.vars(&mut vs));
            if vs.iter().any(|v| !ok(v)) {
                return Err(format!("superposition {} references an unregistered variable", s.id));
            }
        }
        for i in &self.implications {
            if i.antecedents.iter().any(|v| !ok(v)) || !ok(&i.consequent) {
                return Err(format!("implication {} references an unregistered variable", i.id));
            }
        }
        for c in &self.constraints {
            let mut vs = Vec::new();
            c.vars(&mut vs);
            if vs.iter().any(|v| !ok(v)) {
                return Err("constraint references an unregistered variable".into());
            }
        }
        Ok(())
    }

    pub fn known_flags(&self) -> &[bool] {
        &self.is_known
    }

    /// Rebuilds the lookup tables after in-place edits of the public fields.
    pub fn reindex(&mut self) {
        self.index = self.vars.iter().enumerate().map(|(i, v)| (v.edge, i as VarId)).collect();
        self.is_known = vec![false; self.vars.len()];
        let known = std::mem::take(&mut self.known);
        for v in known {
            self.mark_known(v);
        }
        self.supp_index = self.superpositions.iter().map(|s| s.possibilities.clone()).collect();
        self.impl_index = self.implications.iter().map(|i| (i.antecedents.clone(), i.consequent)).collect();
    }

    /// Dense index of each node.
    pub fn node_index(&self) -> HashMap<NodeId, u32> {
        self.nodes.iter().enumerate().map(|(i, n)| (*n, i as u32)).collect()
    }

    /// Node indices of every variable's edge.
    pub fn var_endpoints(&self) -> Vec<(u32, u32)> {
        let index = self.node_index();
        self.vars.iter().map(|v| (index[&v.edge.src], index[&v.edge.dst])).collect()
    }

    pub fn var_label(&self, v: VarId) -> String {
        let e = &self.vars[v as usize].edge;
        match e.key {
            Some(k) => format!("{}({},{})[{}]", e.kind, e.src, e.dst, self.keys.key(k)),
            None => format!("{}({},{})", e.kind, e.src, e.dst),
        }
    }

    pub fn expr_label(&self, e: &LogicExpr) -> String {
        match e {
            LogicExpr::Const(b) => b.to_string(),
            LogicExpr::Var(v) => self.var_label(*v),
            LogicExpr::And(xs) => self.join(xs, " & "),
            LogicExpr::Or(xs) => self.join(xs, " | "),
            LogicExpr::Not(x) => format!("!{}", self.atom(x)),
            LogicExpr::Implies(a, b) => format!("{} => {}", self.atom(a), self.atom(b)),
        }
    }

    fn atom(&self, e: &LogicExpr) -> String {
        match e {
            LogicExpr::Const(_) | LogicExpr::Var(_) | LogicExpr::Not(_) => self.expr_label(e),
            _ => format!("({})", self.expr_label(e)),
        }
    }

    fn join(&self, xs: &[LogicExpr], sep: &str) -> String {
        xs.iter().map(|x| self.atom(x)).collect::<Vec<_>>().join(sep)
    }

    /// Diagnostic text dump, one item per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &v in &self.known {
            let e = &self.vars[v as usize].edge;
            let _ = writeln!(out, "KNOWN {} {} {}", e.src, e.dst, e.kind);
        }
        for s in &self.superpositions {
            let items: Vec<String> = s.possibilities.iter().map(|p| self.expr_label(p)).collect();
            let _ = writeln!(out, "SUPP {}: [{}]", s.id, items.join("; "));
        }
        for i in &self.implications {
            let ante: Vec<String> = i.antecedents.iter().map(|v| self.var_label(*v)).collect();
            let _ = writeln!(out, "IMPL {}: {} => {}", i.id, ante.join(" & "), self.var_label(i.consequent));
        }
        for c in &self.constraints {
            let _ = writeln!(out, "EXPR {}", self.expr_label(c));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeType, TxnRef};
    use crate::isolation::{spec_for, IsolationLevel};

    fn ir() -> Ir {
        let spec = *spec_for(IsolationLevel::Ser);
        let nodes = (1..=3).map(|i| NodeId::whole(TxnRef::Txn(i))).collect();
        Ir::new(spec, nodes, Arc::new(KeyTable::from_keys(["x".into()].into())))
    }

    fn le(a: u64, b: u64, kind: EdgeType) -> LogicalEdge {
        LogicalEdge::new(TxnRef::Txn(a), TxnRef::Txn(b), kind, None)
    }

    #[test]
    fn variables_are_dense_and_shared() {
        let mut ir = ir();
        let a = ir.var(le(1, 2, EdgeType::RW), Source::AntiDep).unwrap();
        let b = ir.var(le(2, 3, EdgeType::RW), Source::AntiDep).unwrap();
        assert_eq!((a, b), (0, 1));
        assert_eq!(ir.var(le(1, 2, EdgeType::RW), Source::ReadDep).unwrap(), a);
        assert_eq!(ir.vars[0].source, Source::AntiDep);
    }

    #[test]
    fn singleton_superposition_becomes_known() {
        let mut ir = ir();
        let a = ir.var(le(1, 2, EdgeType::WR), Source::ReadDep).unwrap();
        assert_eq!(ir.add_superposition(vec![LogicExpr::Var(a)], Origin::Module("t".into())), None);
        assert!(ir.is_known(a));
        assert!(ir.superpositions.is_empty());
    }

    #[test]
    fn duplicate_superpositions_and_implications_collapse() {
        let mut ir = ir();
        let a = ir.var(le(1, 2, EdgeType::WW), Source::WriteDep).unwrap();
        let b = ir.var(le(2, 1, EdgeType::WW), Source::WriteDep).unwrap();
        let c = ir.var(le(3, 2, EdgeType::RW), Source::AntiDep).unwrap();
        let p = vec![LogicExpr::Var(a), LogicExpr::Var(b)];
        assert_eq!(ir.add_superposition(p.clone(), Origin::Module("t".into())), Some(0));
        assert_eq!(ir.add_superposition(p, Origin::Module("t".into())), None);
        ir.add_implication(vec![a], c);
        ir.add_implication(vec![a, a], c);
        assert_eq!(ir.implications.len(), 1);
        assert_eq!(ir.vars[c as usize].implication, Some(0));
        assert!(ir.well_formed().is_ok());
    }

    #[test]
    fn text_dump() {
        let mut ir = ir();
        ir.add_known(le(1, 2, EdgeType::Session), Source::Session).unwrap();
        let a = ir.var(le(1, 3, EdgeType::WW), Source::WriteDep).unwrap();
        let b = ir.var(le(3, 1, EdgeType::WW), Source::WriteDep).unwrap();
        let c = ir.var(le(2, 3, EdgeType::RW), Source::AntiDep).unwrap();
        ir.add_superposition(vec![LogicExpr::Var(a), LogicExpr::Var(b)], Origin::Module("t".into()));
        ir.add_implication(vec![a], c);
        let text = ir.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec!["KNOWN T1 T2 session", "SUPP 0: [ww(T1,T3); ww(T3,T1)]", "IMPL 0: ww(T1,T3) => rw(T2,T3)"]
        );
    }

    #[test]
    fn expression_evaluation() {
        use LogicExpr::*;
        let e = Implies(Box::new(And(vec![Var(0), Var(1)])), Box::new(Not(Box::new(Var(2)))));
        assert!(e.eval(&|v| v != 1));
        assert!(!e.eval(&|_| true));
        assert_eq!(And(vec![Var(0), And(vec![Var(1)])]).conjuncts(), Some(vec![0, 1]));
        assert_eq!(Or(vec![Var(0)]).conjuncts(), None);
    }
}
