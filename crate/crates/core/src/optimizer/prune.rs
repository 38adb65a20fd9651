// SPDX-License-Identifier: Apache-2.0

//! Reachability pruning: drop superposition possibilities that would close a
//! cycle with the known graph, promote forced possibilities, and fire
//! implications whose antecedents are all known. Runs to a fixpoint.

use std::collections::HashMap;

use super::reach::{shortest_path, successors, Reachability};
use crate::ir::{Ir, LogicExpr, VarId};

/// The known graph is already contradictory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EarlyReject {
    /// Variables along a cycle, in edge order. Empty when the contradiction
    /// is not a cycle.
    pub cycle: Vec<VarId>,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruneStats {
    /// Possibilities removed.
    pub pruned: usize,
    /// Superpositions resolved to one possibility.
    pub promoted: usize,
    /// Implications fired.
    pub fired: usize,
    pub rounds: usize,
}

struct Graph {
    ends: Vec<(u32, u32)>,
    n: usize,
}

impl Graph {
    fn known_edges(&self, ir: &Ir) -> Vec<(u32, u32)> {
        ir.known.iter().map(|v| self.ends[*v as usize]).collect()
    }

    /// Known variables along a node path.
    fn path_vars(&self, ir: &Ir, path: &[u32]) -> Vec<VarId> {
        let by_ends: HashMap<(u32, u32), VarId> =
            ir.known.iter().rev().map(|v| (self.ends[*v as usize], *v)).collect();
        path.windows(2).map(|w| by_ends[&(w[0], w[1])]).collect()
    }

    /// Cycle closed by adding `v` to the known graph.
    fn closing_cycle(&self, ir: &Ir, v: VarId) -> Vec<VarId> {
        let (u, w) = self.ends[v as usize];
        let succ = successors(self.n, &self.known_edges(ir));
        let path = shortest_path(&succ, w, u).unwrap_or_default();
        let mut cycle = self.path_vars(ir, &path);
        cycle.push(v);
        cycle
    }
}

/// Why a possibility cannot hold.
enum Blocked {
    Refuted,
    /// Asserting the variable closes a cycle.
    Cycle(VarId),
    /// The possibility forces this implication consequent, which closes a cycle.
    Implied(VarId),
}

struct Round<'a> {
    g: &'a Graph,
    reach: &'a Reachability,
    refuted: &'a [bool],
    by_antecedent: &'a [Vec<u32>],
}

impl Round<'_> {
    fn closes_cycle(&self, v: VarId) -> bool {
        let (u, w) = self.g.ends[v as usize];
        self.reach.reaches(w, u)
    }

    fn blocked(&self, ir: &Ir, conj: &[VarId]) -> Option<Blocked> {
        for &v in conj {
            if self.refuted[v as usize] {
                return Some(Blocked::Refuted);
            }
            if self.closes_cycle(v) {
                return Some(Blocked::Cycle(v));
            }
        }
        for &v in conj {
            for &i in &self.by_antecedent[v as usize] {
                let imp = &ir.implications[i as usize];
                let holds = imp.antecedents.iter().all(|a| ir.is_known(*a) || conj.contains(a));
                if holds && self.closes_cycle(imp.consequent) {
                    return Some(Blocked::Implied(imp.consequent));
                }
            }
        }
        None
    }
}

/// Prunes `ir` in place.
pub fn reachability_prune(ir: &mut Ir) -> Result<PruneStats, EarlyReject> {
    let g = Graph { ends: ir.var_endpoints(), n: ir.nodes.len() };
    let mut refuted = vec![false; ir.vars.len()];
    for &v in &ir.refuted {
        refuted[v as usize] = true;
    }
    let mut by_antecedent = vec![Vec::new(); ir.vars.len()];
    for (i, imp) in ir.implications.iter().enumerate() {
        for &a in &imp.antecedents {
            by_antecedent[a as usize].push(i as u32);
        }
    }
    let mut stats = PruneStats::default();
    let mut fired = vec![false; ir.implications.len()];

    loop {
        stats.rounds += 1;
        let mut changed = false;

        for i in 0..ir.implications.len() {
            let imp = &ir.implications[i];
            if !fired[i] && imp.antecedents.iter().all(|a| ir.is_known(*a)) {
                fired[i] = true;
                stats.fired += 1;
                let c = imp.consequent;
                if !ir.is_known(c) {
                    ir.mark_known(c);
                    changed = true;
                }
            }
        }
        if let Some(&v) = ir.known.iter().find(|v| refuted[**v as usize]) {
            return Err(EarlyReject {
                cycle: Vec::new(),
                detail: format!("{} is both forced and refuted", ir.var_label(v)),
            });
        }

        let reach = Reachability::compute(g.n, &g.known_edges(ir)).map_err(|mut nodes| {
            nodes.push(nodes[0]);
            EarlyReject { cycle: g.path_vars(ir, &nodes), detail: "known edges form a cycle".into() }
        })?;

        let mut supps = std::mem::take(&mut ir.superpositions);
        let mut kept = Vec::with_capacity(supps.len());
        let mut promote: Vec<LogicExpr> = Vec::new();
        for mut s in supps.drain(..) {
            let round = Round { g: &g, reach: &reach, refuted: &refuted, by_antecedent: &by_antecedent };
            let mut first_block = None;
            let before = s.possibilities.len();
            let mut newly_refuted = Vec::new();
            s.possibilities.retain(|p| {
                let Some(conj) = p.conjuncts() else { return true };
                match round.blocked(ir, &conj) {
                    None => true,
                    Some(b) => {
                        if conj.len() == 1 {
                            newly_refuted.push(conj[0]);
                        }
                        first_block.get_or_insert(b);
                        false
                    }
                }
            });
            for v in newly_refuted {
                refuted[v as usize] = true;
            }
            let removed = before - s.possibilities.len();
            stats.pruned += removed;
            changed |= removed > 0;
            match s.possibilities.len() {
                0 => {
                    ir.superpositions = kept;
                    let detail = format!("no possibility of superposition {} is consistent", s.id);
                    let cycle = match first_block {
                        Some(Blocked::Cycle(v)) | Some(Blocked::Implied(v)) => g.closing_cycle(ir, v),
                        _ => Vec::new(),
                    };
                    ir.reindex();
                    return Err(EarlyReject { cycle, detail });
                }
                1 => {
                    stats.promoted += 1;
                    changed = true;
                    promote.push(s.possibilities.pop().expect("one possibility"));
                }
                _ => kept.push(s),
            }
        }
        ir.superpositions = kept;
        for p in promote {
            match p.conjuncts() {
                Some(vs) => vs.into_iter().for_each(|v| ir.mark_known(v)),
                None => ir.add_constraint(p),
            }
        }

        if !changed {
            break;
        }
    }
    ir.refuted = (0..ir.vars.len() as VarId).filter(|v| refuted[*v as usize]).collect();
    ir.reindex();
    Ok(stats)
}
