// SPDX-License-Identifier: Apache-2.0

//! Isolation levels as checkable specifications: which node model the
//! dependency graph uses, which edge types it admits and how logical
//! dependencies map onto nodes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{Edge, EdgeType, LogicalEdge, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IsolationLevel {
    Sser,
    Ser,
    Si,
    Rr,
    Rc,
}

impl IsolationLevel {
    pub const ALL: [IsolationLevel; 5] =
        [IsolationLevel::Sser, IsolationLevel::Ser, IsolationLevel::Si, IsolationLevel::Rr, IsolationLevel::Rc];

    pub fn as_str(self) -> &'static str {
        match self {
            IsolationLevel::Sser => "sser",
            IsolationLevel::Ser => "ser",
            IsolationLevel::Si => "si",
            IsolationLevel::Rr => "rr",
            IsolationLevel::Rc => "rc",
        }
    }
}

impl fmt::Display for IsolationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IsolationLevel {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sser" => IsolationLevel::Sser,
            "ser" => IsolationLevel::Ser,
            "si" => IsolationLevel::Si,
            "rr" => IsolationLevel::Rr,
            "rc" => IsolationLevel::Rc,
            other => return Err(SpecError::UnsupportedLevel(other.to_string())),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("unsupported isolation level {0:?} (supported: sser, ser, si, rr, rc)")]
    UnsupportedLevel(String),
    #[error("{kind} edges are not part of the {level} graph")]
    EdgeTypeExcluded { level: IsolationLevel, kind: EdgeType },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeModel {
    TxnNodes,
    BeginCommitNodes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    Acyclic,
}

#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeTypeSet(u16);

impl EdgeTypeSet {
    pub const fn of(kinds: &[EdgeType]) -> Self {
        let mut bits = 0u16;
        let mut i = 0;
        while i < kinds.len() {
            bits |= 1 << kinds[i] as u16;
            i += 1;
        }
        EdgeTypeSet(bits)
    }

    pub fn contains(self, kind: EdgeType) -> bool {
        self.0 & (1 << kind as u16) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = EdgeType> {
        EdgeType::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

impl fmt::Debug for EdgeTypeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IsolationSpec {
    pub level: IsolationLevel,
    pub node_model: NodeModel,
    pub edge_types: EdgeTypeSet,
    pub condition: Condition,
}

use EdgeType::*;

const SER: IsolationSpec = IsolationSpec {
    level: IsolationLevel::Ser,
    node_model: NodeModel::TxnNodes,
    edge_types: EdgeTypeSet::of(&[WR, WW, RW, PWR, PRW, Session]),
    condition: Condition::Acyclic,
};

const SSER: IsolationSpec = IsolationSpec {
    level: IsolationLevel::Sser,
    node_model: NodeModel::TxnNodes,
    edge_types: EdgeTypeSet::of(&[WR, WW, RW, PWR, PRW, Session, RealTime]),
    condition: Condition::Acyclic,
};

const SI: IsolationSpec = IsolationSpec {
    level: IsolationLevel::Si,
    node_model: NodeModel::BeginCommitNodes,
    edge_types: EdgeTypeSet::of(&[WR, WW, RW, PWR, PRW, Session, Intra]),
    condition: Condition::Acyclic,
};

// Item anti-dependencies in, predicate anti-dependencies out.
const RR: IsolationSpec = IsolationSpec {
    level: IsolationLevel::Rr,
    node_model: NodeModel::TxnNodes,
    edge_types: EdgeTypeSet::of(&[WR, WW, RW, PWR, Session]),
    condition: Condition::Acyclic,
};

const RC: IsolationSpec = IsolationSpec {
    level: IsolationLevel::Rc,
    node_model: NodeModel::TxnNodes,
    edge_types: EdgeTypeSet::of(&[WR, WW, PWR, Session]),
    condition: Condition::Acyclic,
};

pub fn spec_for(level: IsolationLevel) -> &'static IsolationSpec {
    match level {
        IsolationLevel::Sser => &SSER,
        IsolationLevel::Ser => &SER,
        IsolationLevel::Si => &SI,
        IsolationLevel::Rr => &RR,
        IsolationLevel::Rc => &RC,
    }
}

/// Looks a spec up by its CLI name.
pub fn spec_named(name: &str) -> Result<&'static IsolationSpec, SpecError> {
    name.parse().map(spec_for)
}

impl IsolationSpec {
    pub fn admits(&self, kind: EdgeType) -> bool {
        self.edge_types.contains(kind)
    }

    /// Maps a logical dependency onto this spec's node model.
    ///
    /// Under begin/commit nodes, reads and write-write conflicts order the
    /// writer's commit before the other transaction's begin, and
    /// anti-dependencies order the reader's begin before the overwriter's
    /// commit.
    pub fn rewrite_edge(&self, e: &LogicalEdge) -> Result<Edge, SpecError> {
        let excluded = || SpecError::EdgeTypeExcluded { level: self.level, kind: e.kind };
        if e.kind != Intra && !self.admits(e.kind) {
            return Err(excluded());
        }
        let (src, dst) = match self.node_model {
            NodeModel::TxnNodes => {
                if e.kind == Intra {
                    return Err(excluded());
                }
                (NodeId::whole(e.src), NodeId::whole(e.dst))
            }
            NodeModel::BeginCommitNodes => match e.kind {
                WR | PWR | WW | Session | RealTime => (NodeId::commit(e.src), NodeId::begin(e.dst)),
                RW | PRW => (NodeId::begin(e.src), NodeId::commit(e.dst)),
                Intra => (NodeId::begin(e.src), NodeId::commit(e.dst)),
            },
        };
        Ok(Edge { src, dst, kind: e.kind, key: e.key })
    }

    /// Nodes that represent one transaction under this model.
    pub fn nodes_of(&self, txn: crate::graph::TxnRef) -> Vec<NodeId> {
        match self.node_model {
            NodeModel::TxnNodes => vec![NodeId::whole(txn)],
            NodeModel::BeginCommitNodes => vec![NodeId::begin(txn), NodeId::commit(txn)],
        }
    }

    /// The node whose position orders transactions in a witness.
    pub fn witness_node(&self, txn: crate::graph::TxnRef) -> NodeId {
        match self.node_model {
            NodeModel::TxnNodes => NodeId::whole(txn),
            NodeModel::BeginCommitNodes => NodeId::commit(txn),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TxnRef;

    fn le(kind: EdgeType) -> LogicalEdge {
        LogicalEdge::new(TxnRef::Txn(1), TxnRef::Txn(2), kind, None)
    }

    #[test]
    fn ser_row() {
        let s = spec_for(IsolationLevel::Ser);
        assert_eq!(s.node_model, NodeModel::TxnNodes);
        assert_eq!(s.edge_types.len(), 6);
        assert_eq!(s.condition, Condition::Acyclic);
        assert!(!s.admits(RealTime));
    }

    #[test]
    fn table_invariants() {
        for level in IsolationLevel::ALL {
            let s = spec_for(level);
            assert_eq!(s.level, level);
            assert_eq!(s.node_model == NodeModel::BeginCommitNodes, level == IsolationLevel::Si);
        }
        let rc = spec_for(IsolationLevel::Rc);
        assert!(!rc.admits(RW) && !rc.admits(PRW) && rc.admits(PWR));
        let rr = spec_for(IsolationLevel::Rr);
        assert!(rr.admits(RW) && !rr.admits(PRW));
        assert!(spec_for(IsolationLevel::Sser).admits(RealTime));
    }

    #[test]
    fn unsupported_levels() {
        for name in ["pl-2+", "pl2plus", "cs", "pl-fcv", "SER"] {
            assert_eq!(spec_named(name), Err(SpecError::UnsupportedLevel(name.to_string())));
        }
    }

    #[test]
    fn rewrite_identity_under_txn_nodes() {
        let e = spec_for(IsolationLevel::Ser).rewrite_edge(&le(WR)).unwrap();
        assert_eq!((e.src, e.dst), (NodeId::whole(TxnRef::Txn(1)), NodeId::whole(TxnRef::Txn(2))));
    }

    #[test]
    fn rewrite_under_begin_commit_nodes() {
        let si = spec_for(IsolationLevel::Si);
        let wr = si.rewrite_edge(&le(WR)).unwrap();
        assert_eq!((wr.src, wr.dst), (NodeId::commit(TxnRef::Txn(1)), NodeId::begin(TxnRef::Txn(2))));
        let rw = si.rewrite_edge(&le(RW)).unwrap();
        assert_eq!((rw.src, rw.dst), (NodeId::begin(TxnRef::Txn(1)), NodeId::commit(TxnRef::Txn(2))));
        let ww = si.rewrite_edge(&le(WW)).unwrap();
        assert_eq!((ww.src, ww.dst), (NodeId::commit(TxnRef::Txn(1)), NodeId::begin(TxnRef::Txn(2))));
    }

    #[test]
    fn excluded_edges() {
        assert!(matches!(
            spec_for(IsolationLevel::Rc).rewrite_edge(&le(RW)),
            Err(SpecError::EdgeTypeExcluded { kind: RW, .. })
        ));
        assert!(spec_for(IsolationLevel::Ser).rewrite_edge(&le(Intra)).is_err());
        assert!(spec_for(IsolationLevel::Si).rewrite_edge(&le(Intra)).is_ok());
    }
}
