// SPDX-License-Identifier: Apache-2.0

//! Node and edge vocabulary shared by the ASG, the IR and the solver.

use std::fmt;

use crate::trace::TxnId;

/// A transaction as seen by the dependency graph. `Init` is the abstract
/// transaction that wrote the initial state and precedes everything.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TxnRef {
    Init,
    Txn(TxnId),
}

impl TxnRef {
    pub fn txn_id(self) -> Option<TxnId> {
        match self {
            TxnRef::Init => None,
            TxnRef::Txn(id) => Some(id),
        }
    }
}

impl fmt::Display for TxnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxnRef::Init => f.write_str("INIT"),
            TxnRef::Txn(id) => write!(f, "T{id}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Event {
    Whole,
    Begin,
    Commit,
}

/// A graph node under some node model: a whole transaction, or its begin or
/// commit event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub txn: TxnRef,
    pub event: Event,
}

impl NodeId {
    pub fn whole(txn: TxnRef) -> Self {
        NodeId { txn, event: Event::Whole }
    }

    pub fn begin(txn: TxnRef) -> Self {
        NodeId { txn, event: Event::Begin }
    }

    pub fn commit(txn: TxnRef) -> Self {
        NodeId { txn, event: Event::Commit }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event {
            Event::Whole => write!(f, "{}", self.txn),
            Event::Begin => write!(f, "B({})", self.txn),
            Event::Commit => write!(f, "C({})", self.txn),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    WR,
    WW,
    RW,
    PWR,
    PRW,
    Session,
    RealTime,
    Intra,
}

impl EdgeType {
    pub const ALL: [EdgeType; 8] = [
        EdgeType::WR,
        EdgeType::WW,
        EdgeType::RW,
        EdgeType::PWR,
        EdgeType::PRW,
        EdgeType::Session,
        EdgeType::RealTime,
        EdgeType::Intra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::WR => "wr",
            EdgeType::WW => "ww",
            EdgeType::RW => "rw",
            EdgeType::PWR => "pwr",
            EdgeType::PRW => "prw",
            EdgeType::Session => "session",
            EdgeType::RealTime => "realtime",
            EdgeType::Intra => "intra",
        }
    }

    /// Anti-dependencies are only ever derived, never read off a trace.
    pub fn is_derived(self) -> bool {
        matches!(self, EdgeType::RW | EdgeType::PRW)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense index into a [`crate::asg::KeyTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub u32);

/// A dependency between transactions, before node-model rewriting.
///
/// Read and write dependencies carry the key they concern: "T_r read x from
/// T_w" and "T_r read y from T_w" are different facts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalEdge {
    pub src: TxnRef,
    pub dst: TxnRef,
    pub kind: EdgeType,
    pub key: Option<KeyId>,
}

impl LogicalEdge {
    pub fn new(src: TxnRef, dst: TxnRef, kind: EdgeType, key: Option<KeyId>) -> Self {
        LogicalEdge { src, dst, kind, key }
    }
}

/// A dependency in the node model of the active isolation level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeType,
    pub key: Option<KeyId>,
}
