// SPDX-License-Identifier: Apache-2.0

//! Topological ranks of the known graph, used to order solver decisions.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::ir::Ir;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("known edges form a cycle")]
pub struct CycleInKnown;

/// Rank per node index; every known edge goes from a lower to a higher rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityOrder {
    pub rank: Vec<u32>,
}

impl PriorityOrder {
    /// Whether an edge `u -> v` agrees with the order.
    pub fn forward(&self, u: u32, v: u32) -> bool {
        self.rank[u as usize] < self.rank[v as usize]
    }
}

/// Kahn's algorithm over known edges, taking the smallest node first. Node
/// order follows transaction id, with INIT first.
pub fn prioritize(ir: &Ir) -> Result<PriorityOrder, CycleInKnown> {
    let n = ir.nodes.len();
    let ends = ir.var_endpoints();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0u32; n];
    for &v in &ir.known {
        let (a, b) = ends[v as usize];
        succ[a as usize].push(b);
        indeg[b as usize] += 1;
    }
    let mut heap: BinaryHeap<Reverse<(crate::graph::NodeId, u32)>> =
        (0..n as u32).filter(|u| indeg[*u as usize] == 0).map(|u| Reverse((ir.nodes[u as usize], u))).collect();
    let mut rank = vec![u32::MAX; n];
    let mut next = 0;
    while let Some(Reverse((_, u))) = heap.pop() {
        rank[u as usize] = next;
        next += 1;
        for &v in &succ[u as usize] {
            indeg[v as usize] -= 1;
            if indeg[v as usize] == 0 {
                heap.push(Reverse((ir.nodes[v as usize], v)));
            }
        }
    }
    if (next as usize) < n {
        return Err(CycleInKnown);
    }
    Ok(PriorityOrder { rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::analysis::{gen_ir, ModuleRegistry};
    use crate::asg::{build_asg, KeyTable};
    use crate::fixtures;
    use crate::graph::{EdgeType, LogicalEdge, NodeId, TxnRef};
    use crate::ir::Source;
    use crate::isolation::{spec_for, IsolationLevel};

    fn ir(ids: &[u64], known: &[(u64, u64)]) -> Ir {
        let spec = *spec_for(IsolationLevel::Ser);
        let nodes = ids.iter().map(|i| NodeId::whole(TxnRef::Txn(*i))).collect();
        let mut ir = Ir::new(spec, nodes, Arc::new(KeyTable::from_keys(Default::default())));
        for &(a, b) in known {
            ir.add_known(LogicalEdge::new(TxnRef::Txn(a), TxnRef::Txn(b), EdgeType::Session, None), Source::Session)
                .unwrap();
        }
        ir
    }

    #[test]
    fn chain_ranks() {
        let p = prioritize(&ir(&[1, 2, 3], &[(2, 3), (1, 2)])).unwrap();
        assert_eq!(p.rank, vec![0, 1, 2]);
    }

    #[test]
    fn ties_follow_txn_id() {
        let p = prioritize(&ir(&[1, 2], &[])).unwrap();
        assert_eq!(p.rank, vec![0, 1]);
        let p = prioritize(&ir(&[1, 2, 3], &[(3, 1)])).unwrap();
        assert_eq!(p.rank, vec![2, 0, 1]);
    }

    #[test]
    fn cycle_errors() {
        assert_eq!(prioritize(&ir(&[1, 2], &[(1, 2), (2, 1)])), Err(CycleInKnown));
    }

    #[test]
    fn respects_known_edges_on_corpus() {
        for (name, t) in fixtures::corpus() {
            for level in IsolationLevel::ALL {
                let Ok(asg) = build_asg(&t, spec_for(level)) else { continue };
                let Ok(ir) = gen_ir(&asg, &t, &ModuleRegistry::for_hints(&t.hints)) else { continue };
                let Ok(p) = prioritize(&ir) else { continue };
                let ends = ir.var_endpoints();
                for &v in &ir.known {
                    let (a, b) = ends[v as usize];
                    assert!(p.forward(a, b), "{name} {level:?}");
                }
            }
        }
    }
}
