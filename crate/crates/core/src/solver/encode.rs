// SPDX-License-Identifier: Apache-2.0

//! Boolean encoding of an IR shared by the native solver and CNF export.
//! Variables `0..ir.vars.len()` are the IR's edge variables; auxiliary
//! variables for compound expressions follow.

use crate::ir::{Ir, LogicExpr, VarId};

/// A literal: `var * 2 + negated`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(pub u32);

impl Lit {
    pub fn pos(v: VarId) -> Self {
        Lit(v * 2)
    }

    pub fn neg(v: VarId) -> Self {
        Lit(v * 2 + 1)
    }

    pub fn var(self) -> VarId {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn dimacs(self) -> i64 {
        let v = self.var() as i64 + 1;
        if self.is_neg() {
            -v
        } else {
            v
        }
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

/// Clause origin, kept for provenance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClauseSource {
    Implication(u32),
    Tseitin,
    Constraint,
}

#[derive(Clone, Debug, Default)]
pub struct Encoding {
    pub num_vars: u32,
    /// Edge variables; the rest are auxiliary.
    pub num_edge_vars: u32,
    pub units: Vec<Lit>,
    /// Exactly-one blocks, one per superposition, in IR order.
    pub exactly_one: Vec<Vec<Lit>>,
    pub clauses: Vec<(Vec<Lit>, ClauseSource)>,
    konst: Option<VarId>,
}

impl Encoding {
    pub fn new(ir: &Ir) -> Self {
        let n = ir.vars.len() as u32;
        let mut enc = Encoding { num_vars: n, num_edge_vars: n, ..Default::default() };
        enc.units.extend(ir.known.iter().map(|v| Lit::pos(*v)));
        enc.units.extend(ir.refuted.iter().map(|v| Lit::neg(*v)));
        for s in &ir.superpositions {
            let sel = s.possibilities.iter().map(|p| enc.lit_of(p)).collect();
            enc.exactly_one.push(sel);
        }
        for imp in &ir.implications {
            let mut c: Vec<Lit> = imp.antecedents.iter().map(|a| Lit::neg(*a)).collect();
            c.push(Lit::pos(imp.consequent));
            enc.clauses.push((c, ClauseSource::Implication(imp.id)));
        }
        for e in &ir.constraints {
            let l = enc.lit_of(e);
            enc.clauses.push((vec![l], ClauseSource::Constraint));
        }
        enc
    }

    fn fresh(&mut self) -> VarId {
        self.num_vars += 1;
        self.num_vars - 1
    }

    /// A literal equivalent to `e`, adding definitions as needed.
    pub fn lit_of(&mut self, e: &LogicExpr) -> Lit {
        match e {
            LogicExpr::Var(v) => Lit::pos(*v),
            LogicExpr::Const(b) => {
                let t = match self.konst {
                    Some(t) => t,
                    None => {
                        let t = self.fresh();
                        self.konst = Some(t);
                        self.clauses.push((vec![Lit::pos(t)], ClauseSource::Tseitin));
                        t
                    }
                };
                if *b {
                    Lit::pos(t)
                } else {
                    Lit::neg(t)
                }
            }
            LogicExpr::Not(x) => !self.lit_of(x),
            LogicExpr::And(xs) => {
                let ls: Vec<Lit> = xs.iter().map(|x| self.lit_of(x)).collect();
                let a = Lit::pos(self.fresh());
                let mut back = vec![a];
                for &l in &ls {
                    self.clauses.push((vec![!a, l], ClauseSource::Tseitin));
                    back.push(!l);
                }
                self.clauses.push((back, ClauseSource::Tseitin));
                a
            }
            LogicExpr::Or(xs) => {
                let ls: Vec<Lit> = xs.iter().map(|x| self.lit_of(x)).collect();
                self.or_of(ls)
            }
            LogicExpr::Implies(x, y) => {
                let ls = vec![!self.lit_of(x), self.lit_of(y)];
                self.or_of(ls)
            }
        }
    }

    fn or_of(&mut self, ls: Vec<Lit>) -> Lit {
        let a = Lit::pos(self.fresh());
        let mut fwd = vec![!a];
        for &l in &ls {
            self.clauses.push((vec![a, !l], ClauseSource::Tseitin));
            fwd.push(l);
        }
        self.clauses.push((fwd, ClauseSource::Tseitin));
        a
    }

    /// Whether `model` satisfies every part of the encoding.
    pub fn satisfied_by(&self, model: &[bool]) -> bool {
        let val = |l: Lit| model[l.var() as usize] != l.is_neg();
        self.units.iter().all(|l| val(*l))
            && self.exactly_one.iter().all(|eo| eo.iter().filter(|l| val(**l)).count() == 1)
            && self.clauses.iter().all(|(c, _)| c.iter().any(|l| val(*l)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::asg::KeyTable;
    use crate::graph::{EdgeType, LogicalEdge, NodeId, TxnRef};
    use crate::ir::{Origin, Source};
    use crate::isolation::{spec_for, IsolationLevel};

    #[test]
    fn literal_encoding() {
        assert_eq!(Lit::pos(3).0, 6);
        assert_eq!(!Lit::pos(3), Lit::neg(3));
        assert_eq!(Lit::neg(0).dimacs(), -1);
        assert_eq!(Lit::pos(4).dimacs(), 5);
    }

    #[test]
    fn compound_possibility_gets_definition() {
        let spec = *spec_for(IsolationLevel::Ser);
        let nodes = (1..=3).map(|i| NodeId::whole(TxnRef::Txn(i))).collect();
        let mut ir = Ir::new(spec, nodes, Arc::new(KeyTable::from_keys(Default::default())));
        let mut var = |a, b| {
            ir.var(LogicalEdge::new(TxnRef::Txn(a), TxnRef::Txn(b), EdgeType::PWR, None), Source::PredicateDep).unwrap()
        };
        let (a, b, c) = (var(1, 3), var(2, 3), var(1, 2));
        use LogicExpr::*;
        ir.add_superposition(vec![And(vec![Var(a), Var(b)]), Var(c)], Origin::Module("t".into()));
        let enc = Encoding::new(&ir);
        assert_eq!(enc.num_vars, 4);
        assert_eq!(enc.exactly_one, vec![vec![Lit::pos(3), Lit::pos(c)]]);
        assert!(enc.satisfied_by(&[true, true, false, true]));
        assert!(!enc.satisfied_by(&[true, false, false, true]));
        assert!(!enc.satisfied_by(&[true, true, true, true]));
    }
}
