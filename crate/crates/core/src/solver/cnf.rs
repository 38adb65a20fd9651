// SPDX-License-Identifier: Apache-2.0

//! DIMACS CNF export. Acyclicity is encoded with order variables `o(u,v)`
//! over the nodes touched by edges: totality, antisymmetry, transitivity,
//! and `e(u,v) => o(u,v)` for every edge variable.

use std::collections::BTreeMap;
use std::io::{self, Write};

use super::encode::{Encoding, Lit};
use super::theory_edges;
use crate::ir::Ir;

#[derive(Clone, Debug, Default)]
pub struct Cnf {
    pub num_vars: u32,
    pub clauses: Vec<Vec<Lit>>,
    /// `c edge ...` comment lines.
    pub comments: Vec<String>,
}

impl Cnf {
    pub fn from_ir(ir: &Ir) -> Self {
        let mut enc = Encoding::new(ir);
        let mut clauses: Vec<Vec<Lit>> = enc.units.iter().map(|l| vec![*l]).collect();
        for block in &enc.exactly_one {
            clauses.push(block.clone());
            for (i, a) in block.iter().enumerate() {
                for b in &block[i + 1..] {
                    clauses.push(vec![!*a, !*b]);
                }
            }
        }
        clauses.extend(std::mem::take(&mut enc.clauses).into_iter().map(|(c, _)| c));

        let edges = theory_edges(ir);
        let mut nodes: Vec<u32> = edges.iter().flatten().flat_map(|(a, b)| [*a, *b]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut num_vars = enc.num_vars;
        let mut order = BTreeMap::new();
        for &u in &nodes {
            for &v in &nodes {
                if u != v {
                    order.insert((u, v), Lit::pos(num_vars));
                    num_vars += 1;
                }
            }
        }
        let o = |u: u32, v: u32| order[&(u, v)];
        for (i, &u) in nodes.iter().enumerate() {
            for &v in &nodes[i + 1..] {
                clauses.push(vec![o(u, v), o(v, u)]);
                clauses.push(vec![!o(u, v), !o(v, u)]);
            }
        }
        for &u in &nodes {
            for &v in &nodes {
                for &w in &nodes {
                    if u != v && v != w && u != w {
                        clauses.push(vec![!o(u, v), !o(v, w), o(u, w)]);
                    }
                }
            }
        }
        for (var, e) in edges.iter().enumerate() {
            match e {
                Some((a, b)) if a == b => clauses.push(vec![Lit::neg(var as u32)]),
                Some((a, b)) => clauses.push(vec![Lit::neg(var as u32), o(*a, *b)]),
                None => {}
            }
        }

        let comments = ir
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| format!("c edge {} {} {} {}", i + 1, v.edge.src, v.edge.dst, v.edge.kind))
            .collect();
        Cnf { num_vars, clauses, comments }
    }

    pub fn write(&self, out: &mut impl Write) -> io::Result<()> {
        for c in &self.comments {
            writeln!(out, "{c}")?;
        }
        writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        for c in &self.clauses {
            for l in c {
                write!(out, "{} ", l.dimacs())?;
            }
            writeln!(out, "0")?;
        }
        Ok(())
    }
}

/// DIMACS text of the IR's constraints.
pub fn export_cnf(ir: &Ir, out: &mut impl Write) -> io::Result<()> {
    Cnf::from_ir(ir).write(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicBool;
    use std::sync::Arc;

    use crate::analysis::{gen_ir, ModuleRegistry};
    use crate::asg::{build_asg, KeyTable};
    use crate::fixtures;
    use crate::graph::{EdgeType, LogicalEdge, NodeId, TxnRef};
    use crate::ir::Source;
    use crate::isolation::{spec_for, IsolationLevel};
    use crate::solver::{solve, SolveOptions, SolveResult};
    use varisat::ExtendFormula;

    fn external(cnf: &Cnf) -> bool {
        let mut s = varisat::Solver::new();
        let mut f = varisat::CnfFormula::new();
        for c in &cnf.clauses {
            let lits: Vec<varisat::Lit> = c.iter().map(|l| varisat::Lit::from_dimacs(l.dimacs() as isize)).collect();
            f.add_clause(&lits);
        }
        s.add_formula(&f);
        s.solve().unwrap()
    }

    #[test]
    fn empty_ir_is_header_only() {
        let spec = *spec_for(IsolationLevel::Ser);
        let ir = Ir::new(spec, Vec::new(), Arc::new(KeyTable::from_keys(Default::default())));
        let mut out = Vec::new();
        export_cnf(&ir, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "p cnf 0 0\n");
    }

    #[test]
    fn two_node_cycle_is_unsat() {
        let spec = *spec_for(IsolationLevel::Ser);
        let nodes = (1..=2).map(|i| NodeId::whole(TxnRef::Txn(i))).collect();
        let mut ir = Ir::new(spec, nodes, Arc::new(KeyTable::from_keys(Default::default())));
        for (a, b) in [(1, 2), (2, 1)] {
            ir.add_known(LogicalEdge::new(TxnRef::Txn(a), TxnRef::Txn(b), EdgeType::Session, None), Source::Session)
                .unwrap();
        }
        let cnf = Cnf::from_ir(&ir);
        assert!(!external(&cnf));
        let mut out = Vec::new();
        cnf.write(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("c edge 1 T1 T2 session\nc edge 2 T2 T1 session\np cnf "));
    }

    #[test]
    fn external_solver_agrees_on_corpus() {
        for (name, t) in fixtures::corpus() {
            for level in IsolationLevel::ALL {
                let Ok(asg) = build_asg(&t, spec_for(level)) else { continue };
                let Ok(ir) = gen_ir(&asg, &t, &ModuleRegistry::for_hints(&t.hints)) else { continue };
                let native = match solve(&ir, None, SolveOptions::default(), &AtomicBool::new(false)).0 {
                    SolveResult::Sat(_) => true,
                    SolveResult::Unsat(_) => false,
                    SolveResult::BudgetExceeded => panic!("budget"),
                };
                assert_eq!(external(&Cnf::from_ir(&ir)), native, "{name} {level:?}");
            }
        }
    }
}
