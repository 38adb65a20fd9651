// SPDX-License-Identifier: Apache-2.0

//! Abstract Semantic Graph: the structured form of a trace.
//!
//! The ASG has three parts. The known graph holds dependencies that need no
//! guessing. The write history lists, per key, every committed transaction's
//! final write and whatever version order is known. The read lineage maps
//! each observed `(key, value)` to the reads that returned it and the writes
//! each read could have come from.
//!
//! Reads are classified by what was observed:
//!
//! * `Value(v)`: a value was returned. Candidates are the transactions whose
//!   final write of the key is `v`, plus `INIT` when the initial state holds `v`.
//! * `Absent`: a point read returned NULL, or a range query skipped the key
//!   without the tombstone hint. Candidates are the deleters, plus `INIT` when
//!   the key is not in the initial state.
//! * `Tombstone`: a range query returned the key's tombstone. Only deleters
//!   qualify.
//! * `Missing`: with the tombstone hint, a range query skipped the key, so
//!   it was never written. Only `INIT` qualifies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::graph::{Edge, EdgeType, KeyId, LogicalEdge, NodeId, TxnRef};
use crate::ir::Source;
use crate::isolation::{IsolationSpec, NodeModel};
use crate::trace::{
    Hints, IterItem, Key, OperationKind, RyowPolicy, Trace, Transaction, TxnId, TxnStatus, Value, Violation,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AsgError {
    #[error("trace failed validation: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("data integrity violation in T{txn} (op {seq}, key {key}): {detail}")]
    Integrity { txn: TxnId, seq: u64, key: Key, detail: String },
    #[error("no transaction explains what T{txn} observed for key {key} (op {seq})")]
    NoExplanation { txn: TxnId, seq: u64, key: Key },
    #[error("T{txn} op {seq}: iterator {iter} was never opened")]
    IteratorProtocol { txn: TxnId, seq: u64, iter: u64 },
    #[error("version set of T{txn} op {seq} contradicts the observed result for key {key}")]
    VersionSetMismatch { txn: TxnId, seq: u64, key: Key },
    #[error("hinted version order for key {key} is cyclic")]
    VerOrderCycle { key: Key },
    #[error("unique-values hint violated: {value} is written to {key} by more than one transaction")]
    DuplicateValue { key: Key, value: Value },
}

impl AsgError {
    /// Whether this error is a proof that the database misbehaved (as
    /// opposed to a malformed input).
    pub fn is_violation(&self) -> bool {
        matches!(self, AsgError::Integrity { .. } | AsgError::NoExplanation { .. })
    }
}

/// Interned keys, numbered in lexicographic order so that a key range is a
/// contiguous id range.
#[derive(Clone, Debug, Default)]
pub struct KeyTable {
    keys: Vec<Key>,
    index: HashMap<Key, KeyId>,
}

impl KeyTable {
    pub fn from_keys(keys: BTreeSet<Key>) -> Self {
        let keys: Vec<Key> = keys.into_iter().collect();
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), KeyId(i as u32))).collect();
        KeyTable { keys, index }
    }

    pub fn id(&self, k: &Key) -> Option<KeyId> {
        self.index.get(k).copied()
    }

    pub fn key(&self, id: KeyId) -> &Key {
        &self.keys[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Ids of interned keys in `[start, end)`.
    pub fn range(&self, start: &Key, end: &Key) -> Range<u32> {
        let lo = self.keys.partition_point(|k| k < start);
        let hi = self.keys.partition_point(|k| k < end).max(lo);
        lo as u32..hi as u32
    }

    /// Ids of interned keys in `[start, last]`.
    pub fn range_inclusive(&self, start: &Key, last: &Key) -> Range<u32> {
        let lo = self.keys.partition_point(|k| k < start);
        let hi = self.keys.partition_point(|k| k <= last).max(lo);
        lo as u32..hi as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(pub u32);

#[derive(Clone, Debug, Default)]
pub struct ValueTable {
    values: Vec<Value>,
    index: HashMap<Value, ValueId>,
}

impl ValueTable {
    fn intern(&mut self, v: &Value) -> ValueId {
        if let Some(id) = self.index.get(v) {
            return *id;
        }
        let id = ValueId(self.values.len() as u32);
        self.values.push(v.clone());
        self.index.insert(v.clone(), id);
        id
    }

    pub fn id(&self, v: &Value) -> Option<ValueId> {
        self.index.get(v).copied()
    }

    pub fn value(&self, id: ValueId) -> &Value {
        &self.values[id.0 as usize]
    }
}

/// What a committed transaction finally left behind for a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Written {
    Value(ValueId),
    Tombstone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observed {
    Value(ValueId),
    Absent,
    Tombstone,
    Missing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReadKind {
    Read,
    Scan,
    Iter,
}

impl ReadKind {
    pub fn is_predicate(self) -> bool {
        self != ReadKind::Read
    }

    /// Edge type of a dependency from the write this read observed.
    pub fn read_edge(self) -> EdgeType {
        if self.is_predicate() {
            EdgeType::PWR
        } else {
            EdgeType::WR
        }
    }

    /// Edge type of the anti-dependency this read induces.
    pub fn anti_edge(self) -> EdgeType {
        if self.is_predicate() {
            EdgeType::PRW
        } else {
            EdgeType::RW
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ReadKind::Read => "read",
            ReadKind::Scan => "scan",
            ReadKind::Iter => "iter",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteRecord {
    pub txn: TxnId,
    pub seq: u64,
    pub value: Written,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyWrites {
    pub wset: Vec<WriteRecord>,
    /// Known `(earlier, later)` pairs.
    pub ver_order: BTreeSet<(TxnId, TxnId)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineageEntry {
    pub reader: TxnId,
    pub seq: u64,
    /// Sorted. Contains the reader itself when the read may be explained by
    /// its own earlier write, in which case the entry constrains nothing.
    pub cand_ws: Vec<TxnRef>,
    pub kind: ReadKind,
    pub ver_set: Option<Vec<TxnRef>>,
}

impl LineageEntry {
    pub fn is_internal(&self) -> bool {
        self.cand_ws.contains(&TxnRef::Txn(self.reader))
    }
}

/// An in-range key a range query did not return, for which the trace does
/// not say why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhantomMarker {
    pub reader: TxnId,
    pub seq: u64,
    pub key: KeyId,
    pub kind: ReadKind,
    pub candidates: Vec<TxnRef>,
}

#[derive(Clone, Debug)]
pub struct Asg {
    pub spec: IsolationSpec,
    pub hints: Hints,
    pub keys: KeyTable,
    pub values: ValueTable,
    pub initial: HashMap<KeyId, ValueId>,
    /// Committed transactions under analysis, ascending.
    pub txns: Vec<TxnId>,
    pub nodes: Vec<NodeId>,
    pub known: Vec<(Edge, Source)>,
    pub write_history: BTreeMap<KeyId, KeyWrites>,
    pub read_lineage: BTreeMap<(KeyId, Observed), Vec<LineageEntry>>,
    pub phantoms: Vec<PhantomMarker>,
    /// Consecutive committed transactions of each session.
    pub session_pairs: Vec<(TxnId, TxnId)>,
    pub realtime_pairs: Vec<(TxnId, TxnId)>,
    pub init_txn: NodeId,
    /// A segment ASG covers only some transactions.
    pub scoped: bool,
}

impl Asg {
    pub fn writers(&self, key: KeyId) -> impl Iterator<Item = TxnId> + '_ {
        self.write_history.get(&key).into_iter().flat_map(|w| w.wset.iter().map(|r| r.txn))
    }

    pub fn lineage_entries(&self) -> impl Iterator<Item = (KeyId, Observed, &LineageEntry)> {
        self.read_lineage.iter().flat_map(|(&(k, o), es)| es.iter().map(move |e| (k, o, e)))
    }
}

/// Drops aborted and ongoing transactions.
pub fn committed_subtrace(t: &Trace) -> Trace {
    let transactions: BTreeMap<_, _> =
        t.transactions.iter().filter(|(_, txn)| txn.is_committed()).map(|(id, txn)| (*id, txn.clone())).collect();
    let sessions = t
        .sessions
        .iter()
        .map(|(s, ids)| (*s, ids.iter().copied().filter(|id| transactions.contains_key(id)).collect::<Vec<_>>()))
        .filter(|(_, ids)| !ids.is_empty())
        .collect();
    Trace { transactions, sessions, hints: t.hints.clone(), initial: t.initial.clone() }
}

struct Builder<'t> {
    trace: &'t Trace,
    scope: Option<&'t BTreeSet<TxnId>>,
    keys: KeyTable,
    values: ValueTable,
    initial: HashMap<KeyId, ValueId>,
    /// Final written state per `(key, state)` over every committed txn.
    writers_of: HashMap<(KeyId, Written), Vec<TxnId>>,
    /// Keys with at least one committed writer or an initial value.
    live_keys: Vec<bool>,
    lineage: BTreeMap<(KeyId, Observed), Vec<LineageEntry>>,
    phantoms: Vec<PhantomMarker>,
}

fn trace_keys(t: &Trace) -> BTreeSet<Key> {
    let mut keys: BTreeSet<Key> = t.initial.keys().cloned().collect();
    for txn in t.transactions.values() {
        for op in &txn.ops {
            match &op.kind {
                OperationKind::Put { key, .. } | OperationKind::Get { key, .. } | OperationKind::Delete { key } => {
                    keys.insert(key.clone());
                }
                OperationKind::Scan { results, .. } => keys.extend(results.iter().map(|(k, _)| k.clone())),
                OperationKind::IterNext { result: IterItem::Item(k, _), .. } => {
                    keys.insert(k.clone());
                }
                _ => {}
            }
        }
    }
    keys
}

/// Final write per key of one transaction, with the op sequence number.
fn final_writes(txn: &Transaction) -> BTreeMap<&Key, (u64, Option<&Value>)> {
    let mut out = BTreeMap::new();
    for op in txn.body() {
        match &op.kind {
            OperationKind::Put { key, value } => {
                out.insert(key, (op.seq, Some(value)));
            }
            OperationKind::Delete { key } => {
                out.insert(key, (op.seq, None));
            }
            _ => {}
        }
    }
    out
}

fn own_matches(own: Written, obs: Observed) -> bool {
    match (own, obs) {
        (Written::Value(a), Observed::Value(b)) => a == b,
        (Written::Tombstone, Observed::Absent | Observed::Tombstone) => true,
        _ => false,
    }
}

struct PendingIter {
    seq: u64,
    start: Key,
    end: Key,
    own: HashMap<KeyId, Written>,
    items: Vec<(Key, Option<Value>, u64)>,
    exhausted: bool,
}

impl<'t> Builder<'t> {
    fn in_scope(&self, id: TxnId) -> bool {
        self.scope.is_none_or(|s| s.contains(&id))
    }

    fn written(&mut self, v: Option<&Value>) -> Written {
        match v {
            Some(v) => Written::Value(self.values.intern(v)),
            None => Written::Tombstone,
        }
    }

    fn observed_value(&self, v: &Value) -> Option<Observed> {
        self.values.id(v).map(Observed::Value)
    }

    /// Natural candidate writers of an observation, ignoring own writes.
    fn candidates(&self, reader: TxnId, key: KeyId, obs: Observed) -> Vec<TxnRef> {
        let init = self.initial.get(&key).copied();
        let (written, init_ok) = match obs {
            Observed::Value(v) => (Some(Written::Value(v)), init == Some(v)),
            Observed::Absent => (Some(Written::Tombstone), init.is_none()),
            Observed::Tombstone => (Some(Written::Tombstone), false),
            Observed::Missing => (None, init.is_none()),
        };
        let mut out = Vec::new();
        if init_ok {
            out.push(TxnRef::Init);
        }
        if let Some(w) = written {
            if let Some(ws) = self.writers_of.get(&(key, w)) {
                out.extend(ws.iter().filter(|&&id| id != reader).map(|&id| TxnRef::Txn(id)));
            }
        }
        out
    }

    fn violation(&self, txn: TxnId, seq: u64, key: KeyId, obs: Observed, detail: &str) -> AsgError {
        let key = self.keys.key(key).clone();
        match obs {
            Observed::Absent | Observed::Missing => AsgError::NoExplanation { txn, seq, key },
            _ => AsgError::Integrity { txn, seq, key, detail: detail.to_string() },
        }
    }

    /// Resolves one observation of one key. Returns the candidate list, or
    /// `None` when the observation should be left out of a segment.
    #[allow(clippy::too_many_arguments)]
    fn resolve(
        &self,
        reader: TxnId,
        seq: u64,
        key: KeyId,
        obs: Observed,
        own: Option<Written>,
        hinted: Option<TxnRef>,
        allow_empty: bool,
    ) -> Result<Option<(Vec<TxnRef>, Option<Vec<TxnRef>>)>, AsgError> {
        let policy = self.trace.hints.ryow;
        let own_ok = own.map(|w| own_matches(w, obs));
        match (own_ok, policy) {
            (Some(true), RyowPolicy::MustOwn) => return Ok(Some((vec![TxnRef::Txn(reader)], None))),
            (Some(false), RyowPolicy::MustOwn) => {
                return Err(AsgError::Integrity {
                    txn: reader,
                    seq,
                    key: self.keys.key(key).clone(),
                    detail: "read does not return the transaction's own latest write".into(),
                })
            }
            _ => {}
        }
        let mut cands = self.candidates(reader, key, obs);
        if own_ok == Some(true) && policy == RyowPolicy::Either {
            cands.push(TxnRef::Txn(reader));
            cands.sort();
            return Ok(Some((cands, None)));
        }
        let mut ver_set = None;
        if let Some(w) = hinted {
            if !cands.contains(&w) {
                return Err(AsgError::VersionSetMismatch { txn: reader, seq, key: self.keys.key(key).clone() });
            }
            cands = vec![w];
            ver_set = Some(vec![w]);
        }
        if cands.is_empty() && !allow_empty {
            return Err(self.violation(reader, seq, key, obs, "value was never written by a committed transaction"));
        }
        if self.trace.hints.unique_values && cands.len() > 1 {
            if let Observed::Value(v) = obs {
                return Err(AsgError::DuplicateValue {
                    key: self.keys.key(key).clone(),
                    value: self.values.value(v).clone(),
                });
            }
        }
        let out_of_scope = cands.iter().any(|c| matches!(c, TxnRef::Txn(id) if !self.in_scope(*id)));
        if out_of_scope {
            return Ok(None);
        }
        Ok(Some((cands, ver_set)))
    }

    fn record(&mut self, key: KeyId, obs: Observed, entry: LineageEntry) {
        self.lineage.entry((key, obs)).or_default().push(entry);
    }

    fn point_read(
        &mut self,
        txn: TxnId,
        seq: u64,
        key: &Key,
        result: &Option<Value>,
        own: &HashMap<KeyId, Written>,
    ) -> Result<(), AsgError> {
        let kid = self.keys.id(key).expect("every trace key is interned");
        let obs = match result {
            None => Observed::Absent,
            Some(v) => match self.observed_value(v) {
                Some(o) if own.contains_key(&kid) || self.live_value(kid, o) => o,
                _ => {
                    return Err(AsgError::Integrity {
                        txn,
                        seq,
                        key: key.clone(),
                        detail: format!("value {v} was never written"),
                    })
                }
            },
        };
        if let Some((cand_ws, ver_set)) = self.resolve(txn, seq, kid, obs, own.get(&kid).copied(), None, false)? {
            self.record(kid, obs, LineageEntry { reader: txn, seq, cand_ws, kind: ReadKind::Read, ver_set });
        }
        Ok(())
    }

    fn live_value(&self, key: KeyId, obs: Observed) -> bool {
        match obs {
            Observed::Value(v) => {
                self.initial.get(&key) == Some(&v) || self.writers_of.contains_key(&(key, Written::Value(v)))
            }
            _ => true,
        }
    }

    /// A range query or an iterator: returned items plus every live key in
    /// `range` that was not returned.
    #[allow(clippy::too_many_arguments)]
    fn predicate_read(
        &mut self,
        txn: TxnId,
        seq: u64,
        kind: ReadKind,
        range: Range<u32>,
        items: &[(Key, Option<Value>, u64)],
        own: &HashMap<KeyId, Written>,
    ) -> Result<(), AsgError> {
        let tombstones = self.trace.hints.tombstones;
        let hinted: HashMap<KeyId, TxnRef> = self
            .trace
            .hints
            .version_sets
            .get(&(txn, seq))
            .map(|set| {
                set.iter()
                    .filter_map(|(k, w)| {
                        self.keys.id(k).map(|id| (id, w.map_or(TxnRef::Init, TxnRef::Txn)))
                    })
                    .collect()
            })
            .unwrap_or_default();

        let mut returned = BTreeSet::new();
        for (key, value, item_seq) in items {
            let kid = self.keys.id(key).expect("every trace key is interned");
            returned.insert(kid.0);
            let obs = match value {
                Some(v) => match self.observed_value(v) {
                    Some(o) if own.contains_key(&kid) || self.live_value(kid, o) => o,
                    _ => {
                        return Err(AsgError::Integrity {
                            txn,
                            seq: *item_seq,
                            key: key.clone(),
                            detail: format!("value {v} was never written"),
                        })
                    }
                },
                None if tombstones => Observed::Tombstone,
                None => {
                    return Err(AsgError::Integrity {
                        txn,
                        seq: *item_seq,
                        key: key.clone(),
                        detail: "tombstone returned without the tombstone hint".into(),
                    })
                }
            };
            if let Some((cand_ws, ver_set)) =
                self.resolve(txn, seq, kid, obs, own.get(&kid).copied(), hinted.get(&kid).copied(), false)?
            {
                self.record(kid, obs, LineageEntry { reader: txn, seq, cand_ws, kind, ver_set });
            }
        }

        let skipped = if tombstones { Observed::Missing } else { Observed::Absent };
        for raw in range {
            if returned.contains(&raw) {
                continue;
            }
            let kid = KeyId(raw);
            let own_w = own.get(&kid).copied();
            if !self.live_keys[raw as usize] && own_w.is_none() {
                continue;
            }
            if let Some((candidates, _)) =
                self.resolve(txn, seq, kid, skipped, own_w, hinted.get(&kid).copied(), true)?
            {
                if candidates.contains(&TxnRef::Txn(txn)) {
                    continue;
                }
                self.phantoms.push(PhantomMarker { reader: txn, seq, key: kid, kind, candidates });
            }
        }
        Ok(())
    }

    fn process_txn(&mut self, txn: &Transaction) -> Result<(), AsgError> {
        let mut own: HashMap<KeyId, Written> = HashMap::new();
        let mut iters: BTreeMap<u64, PendingIter> = BTreeMap::new();
        for op in txn.body() {
            match &op.kind {
                OperationKind::Put { key, value } => {
                    let w = self.written(Some(value));
                    own.insert(self.keys.id(key).expect("interned"), w);
                }
                OperationKind::Delete { key } => {
                    own.insert(self.keys.id(key).expect("interned"), Written::Tombstone);
                }
                OperationKind::Get { key, result } => self.point_read(txn.id, op.seq, key, result, &own)?,
                OperationKind::Scan { start, end, results } => {
                    let items: Vec<_> = results.iter().map(|(k, v)| (k.clone(), v.clone(), op.seq)).collect();
                    let range = self.keys.range(start, end);
                    self.predicate_read(txn.id, op.seq, ReadKind::Scan, range, &items, &own)?;
                }
                OperationKind::IterOpen { iter, start, end } => {
                    iters.insert(
                        *iter,
                        PendingIter {
                            seq: op.seq,
                            start: start.clone(),
                            end: end.clone(),
                            own: own.clone(),
                            items: Vec::new(),
                            exhausted: false,
                        },
                    );
                }
                OperationKind::IterNext { iter, result } => {
                    let Some(p) = iters.get_mut(iter) else {
                        return Err(AsgError::IteratorProtocol { txn: txn.id, seq: op.seq, iter: *iter });
                    };
                    match result {
                        IterItem::Exhausted => p.exhausted = true,
                        IterItem::Item(k, v) => p.items.push((k.clone(), v.clone(), op.seq)),
                    }
                }
                _ => {}
            }
        }
        for p in iters.into_values() {
            // Keys past the last returned one are unconstrained unless the
            // iterator ran dry.
            let range = if p.exhausted {
                self.keys.range(&p.start, &p.end)
            } else if let Some((last, _, _)) = p.items.last() {
                self.keys.range_inclusive(&p.start, last)
            } else {
                0..0
            };
            self.predicate_read(txn.id, p.seq, ReadKind::Iter, range, &p.items, &p.own)?;
        }
        Ok(())
    }
}

/// Builds the ASG of the committed part of `t`.
pub fn build_asg(t: &Trace, spec: &IsolationSpec) -> Result<Asg, AsgError> {
    build_asg_scoped(t, spec, None)
}

/// Builds the ASG for a subset of the committed transactions, as used when
/// checking a segment. Writers outside the scope still count when computing
/// what a read could have observed; reads that may have come from outside
/// the scope are omitted, so the segment's constraints are implied by the
/// full trace's.
pub fn build_asg_scoped(t: &Trace, spec: &IsolationSpec, scope: Option<&BTreeSet<TxnId>>) -> Result<Asg, AsgError> {
    let violations = crate::trace::validate_trace(t);
    if !violations.is_empty() {
        return Err(AsgError::Invalid(violations));
    }
    let hints = &t.hints;
    let keys = KeyTable::from_keys(trace_keys(t));
    let mut b = Builder {
        trace: t,
        scope,
        live_keys: vec![false; keys.len()],
        keys,
        values: ValueTable::default(),
        initial: HashMap::new(),
        writers_of: HashMap::new(),
        lineage: BTreeMap::new(),
        phantoms: Vec::new(),
    };
    for (k, v) in &t.initial {
        let kid = b.keys.id(k).expect("interned");
        let vid = b.values.intern(v);
        b.initial.insert(kid, vid);
        b.live_keys[kid.0 as usize] = true;
    }

    let committed: Vec<&Transaction> = t.committed().collect();
    let mut write_history: BTreeMap<KeyId, KeyWrites> = BTreeMap::new();
    for txn in &committed {
        for (key, (seq, value)) in final_writes(txn) {
            let kid = b.keys.id(key).expect("interned");
            let w = b.written(value);
            b.writers_of.entry((kid, w)).or_default().push(txn.id);
            b.live_keys[kid.0 as usize] = true;
            if b.in_scope(txn.id) {
                write_history.entry(kid).or_default().wset.push(WriteRecord { txn: txn.id, seq, value: w });
            }
        }
    }

    for (key, a, c) in &hints.version_order {
        let Some(kid) = b.keys.id(key) else { continue };
        let Some(kw) = write_history.get_mut(&kid) else { continue };
        let is_writer = |id: &TxnId| kw.wset.iter().any(|r| r.txn == *id);
        if is_writer(a) && is_writer(c) {
            if a == c {
                return Err(AsgError::VerOrderCycle { key: key.clone() });
            }
            kw.ver_order.insert((*a, *c));
        }
    }
    for (kid, kw) in &write_history {
        if order_has_cycle(&kw.ver_order) {
            return Err(AsgError::VerOrderCycle { key: b.keys.key(*kid).clone() });
        }
    }

    let txns: Vec<TxnId> = committed.iter().map(|t| t.id).filter(|id| b.in_scope(*id)).collect();
    for txn in &committed {
        if b.in_scope(txn.id) {
            b.process_txn(txn)?;
        }
    }

    let mut nodes = spec.nodes_of(TxnRef::Init);
    for id in &txns {
        nodes.extend(spec.nodes_of(TxnRef::Txn(*id)));
    }

    let mut session_pairs = Vec::new();
    if hints.session_order {
        for ids in t.sessions.values() {
            let members: Vec<TxnId> = ids
                .iter()
                .copied()
                .filter(|id| t.transactions.get(id).is_some_and(|x| x.status == TxnStatus::Committed) && b.in_scope(*id))
                .collect();
            session_pairs.extend(members.windows(2).map(|w| (w[0], w[1])));
        }
    }
    let realtime_pairs = if hints.real_time && spec.admits(EdgeType::RealTime) {
        realtime_cover(committed.iter().filter(|x| b.in_scope(x.id)).copied())
    } else {
        Vec::new()
    };

    let mut known: Vec<(Edge, Source)> = Vec::new();
    let mut push = |le: LogicalEdge, src: Source| {
        if let Ok(e) = spec.rewrite_edge(&le) {
            known.push((e, src));
        }
    };
    for ((kid, _), entries) in &b.lineage {
        for e in entries {
            if let [w] = e.cand_ws.as_slice() {
                if *w != TxnRef::Txn(e.reader) {
                    push(LogicalEdge::new(*w, TxnRef::Txn(e.reader), e.kind.read_edge(), Some(*kid)), Source::ReadDep);
                }
            }
        }
    }
    for (kid, kw) in &write_history {
        for (a, c) in &kw.ver_order {
            push(LogicalEdge::new(TxnRef::Txn(*a), TxnRef::Txn(*c), EdgeType::WW, Some(*kid)), Source::VersionOrder);
        }
    }
    for (a, c) in &session_pairs {
        push(LogicalEdge::new(TxnRef::Txn(*a), TxnRef::Txn(*c), EdgeType::Session, None), Source::Session);
    }
    for (a, c) in &realtime_pairs {
        push(LogicalEdge::new(TxnRef::Txn(*a), TxnRef::Txn(*c), EdgeType::RealTime, None), Source::RealTime);
    }
    if spec.node_model == NodeModel::BeginCommitNodes {
        for id in &txns {
            push(LogicalEdge::new(TxnRef::Txn(*id), TxnRef::Txn(*id), EdgeType::Intra, None), Source::Intra);
        }
    }

    Ok(Asg {
        spec: *spec,
        hints: hints.clone(),
        init_txn: spec.nodes_of(TxnRef::Init)[0],
        keys: b.keys,
        values: b.values,
        initial: b.initial,
        txns,
        nodes,
        known,
        write_history,
        read_lineage: b.lineage,
        phantoms: b.phantoms,
        session_pairs,
        realtime_pairs,
        scoped: scope.is_some(),
    })
}

fn order_has_cycle(pairs: &BTreeSet<(TxnId, TxnId)>) -> bool {
    let mut succ: BTreeMap<TxnId, Vec<TxnId>> = BTreeMap::new();
    let mut indeg: BTreeMap<TxnId, usize> = BTreeMap::new();
    for (a, b) in pairs {
        succ.entry(*a).or_default().push(*b);
        indeg.entry(*a).or_default();
        *indeg.entry(*b).or_default() += 1;
    }
    let mut ready: Vec<TxnId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for m in succ.get(&n).into_iter().flatten() {
            let d = indeg.get_mut(m).expect("registered");
            *d -= 1;
            if *d == 0 {
                ready.push(*m);
            }
        }
    }
    seen != indeg.len()
}

/// Real-time edges `Ti -> Tj` (Ti commits before Tj begins), keeping only
/// those not implied transitively by the others.
pub fn realtime_cover<'a>(txns: impl Iterator<Item = &'a Transaction>) -> Vec<(TxnId, TxnId)> {
    let mut timed: Vec<(u64, u64, TxnId)> =
        txns.filter_map(|t| Some((t.ts_commit?, t.ts_begin?, t.id))).collect();
    timed.sort_unstable();
    let mut prefix_max_begin = Vec::with_capacity(timed.len());
    let mut m = 0u64;
    for (_, b, _) in &timed {
        m = m.max(*b);
        prefix_max_begin.push(m);
    }
    let mut out = Vec::new();
    for &(_, begin_j, j) in &timed {
        let hi = timed.partition_point(|(c, _, _)| *c < begin_j);
        if hi == 0 {
            continue;
        }
        let latest_begin = prefix_max_begin[hi - 1];
        let lo = timed.partition_point(|(c, _, _)| *c < latest_begin);
        out.extend(timed[lo..hi].iter().map(|&(_, _, i)| (i, j)));
    }
    out.sort_unstable();
    out
}

fn observed_json(asg: &Asg, o: Observed) -> Json {
    match o {
        Observed::Value(v) => json!(asg.values.value(v).to_string()),
        Observed::Absent => json!("ABSENT"),
        Observed::Tombstone => json!("TOMBSTONE"),
        Observed::Missing => json!("MISSING"),
    }
}

fn refs_json(refs: &[TxnRef]) -> Json {
    Json::Array(refs.iter().map(|r| json!(r.to_string())).collect())
}

/// Diagnostic dump of the ASG. The layout is not a stable interface.
pub fn asg_to_json(asg: &Asg) -> Json {
    let edges: Vec<Json> = asg
        .known
        .iter()
        .map(|(e, src)| {
            json!({
                "src": e.src.to_string(),
                "dst": e.dst.to_string(),
                "type": e.kind.as_str(),
                "key": e.key.map(|k| asg.keys.key(k).to_string()),
                "source": src.to_string(),
            })
        })
        .collect();
    let write_history: serde_json::Map<String, Json> = asg
        .write_history
        .iter()
        .map(|(k, kw)| {
            let wset: Vec<Json> = kw
                .wset
                .iter()
                .map(|r| {
                    let v = match r.value {
                        Written::Value(v) => json!(asg.values.value(v).to_string()),
                        Written::Tombstone => json!("TOMBSTONE"),
                    };
                    json!({"txn": r.txn, "seq": r.seq, "value": v})
                })
                .collect();
            (asg.keys.key(*k).to_string(), json!({"wSet": wset, "verOrder": kw.ver_order}))
        })
        .collect();
    let mut lineage: Vec<Json> = asg
        .lineage_entries()
        .map(|(k, o, e)| {
            json!({
                "key": asg.keys.key(k).to_string(),
                "value": observed_json(asg, o),
                "reader": e.reader,
                "seq": e.seq,
                "candWs": refs_json(&e.cand_ws),
                "type": e.kind.as_str(),
                "verSet": e.ver_set.as_deref().map(refs_json),
            })
        })
        .collect();
    lineage.extend(asg.phantoms.iter().map(|p| {
        json!({
            "key": asg.keys.key(p.key).to_string(),
            "value": "PHANTOM",
            "reader": p.reader,
            "seq": p.seq,
            "candWs": refs_json(&p.candidates),
            "type": p.kind.as_str(),
            "verSet": null,
        })
    }));
    json!({
        "nodes": asg.nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>(),
        "edges": edges,
        "write_history": write_history,
        "read_lineage": lineage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, del, get, put, scan, TraceBuilder};
    use crate::isolation::{spec_for, IsolationLevel};

    fn ser() -> &'static IsolationSpec {
        spec_for(IsolationLevel::Ser)
    }

    fn edge_set(asg: &Asg) -> BTreeSet<(String, String, EdgeType)> {
        asg.known.iter().map(|(e, _)| (e.src.to_string(), e.dst.to_string(), e.kind)).collect()
    }

    #[test]
    fn figure_two_instance() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1")])
            .txn(2, 2, vec![put("x", "2")])
            .txn(3, 3, vec![get("x", Some("2"))])
            .hints(|h| {
                h.version_order.insert(("x".into(), 1, 2));
            })
            .build();
        let asg = build_asg(&t, ser()).unwrap();
        let x = asg.keys.id(&"x".into()).unwrap();
        let kw = &asg.write_history[&x];
        let wset: Vec<(TxnId, Written)> = kw.wset.iter().map(|r| (r.txn, r.value)).collect();
        let v = |s: &str| Written::Value(asg.values.id(&s.into()).unwrap());
        assert_eq!(wset, vec![(1, v("1")), (2, v("2"))]);
        assert_eq!(kw.ver_order, BTreeSet::from([(1, 2)]));
        let two = Observed::Value(asg.values.id(&"2".into()).unwrap());
        let entries = &asg.read_lineage[&(x, two)];
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].reader, 3);
        assert_eq!(entries[0].cand_ws, vec![TxnRef::Txn(2)]);
        assert_eq!(entries[0].kind, ReadKind::Read);
        assert_eq!(entries[0].ver_set, None);
        let expected: BTreeSet<_> =
            [("T1".into(), "T2".into(), EdgeType::WW), ("T2".into(), "T3".into(), EdgeType::WR)].into();
        assert_eq!(edge_set(&asg), expected);
    }

    #[test]
    fn unwritten_value_is_an_integrity_violation() {
        let t = TraceBuilder::new().txn(1, 1, vec![put("x", "1")]).txn(2, 2, vec![get("x", Some("7"))]).build();
        assert!(matches!(build_asg(&t, ser()), Err(AsgError::Integrity { txn: 2, .. })));
    }

    #[test]
    fn unique_values_give_singleton_lineage() {
        let mut t = fixtures::tau0();
        t.hints.unique_values = true;
        let asg = build_asg(&t, ser()).unwrap();
        assert!(asg.lineage_entries().all(|(_, _, e)| e.cand_ws.len() == 1));
        assert_eq!(asg.known.iter().filter(|(e, _)| e.kind == EdgeType::WR).count(), 2);
    }

    #[test]
    fn duplicate_value_under_unique_hint_errors() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "5")])
            .txn(2, 2, vec![put("x", "5")])
            .txn(3, 3, vec![get("x", Some("5"))])
            .hints(|h| h.unique_values = true)
            .build();
        assert!(matches!(build_asg(&t, ser()), Err(AsgError::DuplicateValue { .. })));
    }

    #[test]
    fn null_read_candidates_are_init_and_deleters() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1")])
            .txn(2, 2, vec![del("x")])
            .txn(3, 3, vec![get("x", None)])
            .build();
        let asg = build_asg(&t, ser()).unwrap();
        let (_, obs, e) = asg.lineage_entries().next().unwrap();
        assert_eq!(obs, Observed::Absent);
        assert_eq!(e.cand_ws, vec![TxnRef::Init, TxnRef::Txn(2)]);
    }

    #[test]
    fn phantom_marker_without_tombstones() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1"), put("y", "1")])
            .txn(2, 2, vec![del("y")])
            .txn(3, 3, vec![scan("x", "z", &[("x", Some("1"))])])
            .build();
        let asg = build_asg(&t, ser()).unwrap();
        assert_eq!(asg.phantoms.len(), 1);
        let p = &asg.phantoms[0];
        assert_eq!(asg.keys.key(p.key), &Key::from("y"));
        assert_eq!(p.candidates, vec![TxnRef::Init, TxnRef::Txn(2)]);
        assert_eq!(p.kind, ReadKind::Scan);
    }

    #[test]
    fn tombstone_result_yields_known_predicate_read() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1"), put("y", "1")])
            .txn(2, 2, vec![del("y")])
            .txn(3, 3, vec![scan("x", "z", &[("x", Some("1")), ("y", None)])])
            .hints(|h| h.tombstones = true)
            .build();
        let asg = build_asg(&t, ser()).unwrap();
        assert!(asg.phantoms.is_empty());
        assert!(edge_set(&asg).contains(&("T2".into(), "T3".into(), EdgeType::PWR)));
    }

    #[test]
    fn scan_over_untouched_range_adds_nothing() {
        let t = TraceBuilder::new().txn(1, 1, vec![put("a", "1")]).txn(2, 2, vec![scan("m", "p", &[])]).build();
        let asg = build_asg(&t, ser()).unwrap();
        assert!(asg.phantoms.is_empty());
        assert_eq!(asg.lineage_entries().count(), 0);
    }

    #[test]
    fn iterator_without_open_is_a_protocol_error() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![OperationKind::IterNext { iter: 3, result: IterItem::Exhausted }])
            .build();
        assert!(matches!(build_asg(&t, ser()), Err(AsgError::IteratorProtocol { iter: 3, .. })));
    }

    #[test]
    fn ryow_policies() {
        let body = vec![put("x", "1"), get("x", Some("1"))];
        let make = |policy| {
            TraceBuilder::new()
                .init("x", "1")
                .txn(1, 1, body.clone())
                .hints(|h| h.ryow = policy)
                .build()
        };
        let entry = |policy| {
            let asg = build_asg(&make(policy), ser()).unwrap();
            let cands = asg.lineage_entries().next().unwrap().2.cand_ws.clone();
            cands
        };
        assert_eq!(entry(RyowPolicy::MustOwn), vec![TxnRef::Txn(1)]);
        assert_eq!(entry(RyowPolicy::MustExternal), vec![TxnRef::Init]);
        assert_eq!(entry(RyowPolicy::Either), vec![TxnRef::Init, TxnRef::Txn(1)]);

        let stale = TraceBuilder::new().init("x", "0").txn(1, 1, vec![put("x", "1"), get("x", Some("0"))]).build();
        assert!(matches!(build_asg(&stale, ser()), Err(AsgError::Integrity { .. })));
    }

    #[test]
    fn committed_subtrace_drops_aborted() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1")])
            .aborted(2, 1, vec![put("x", "9")])
            .txn(3, 2, vec![get("x", Some("1"))])
            .build();
        let sub = committed_subtrace(&t);
        assert_eq!(sub.transactions.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(sub.sessions[&1], vec![1]);
        assert_eq!(committed_subtrace(&sub), sub);
    }

    #[test]
    fn aborted_read_is_an_integrity_violation() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1")])
            .aborted(2, 1, vec![put("x", "9")])
            .txn(3, 2, vec![get("x", Some("9"))])
            .build();
        assert!(matches!(build_asg(&committed_subtrace(&t), ser()), Err(AsgError::Integrity { txn: 3, .. })));
    }

    #[test]
    fn intermediate_write_is_not_a_candidate() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1"), put("x", "2")])
            .txn(2, 2, vec![get("x", Some("1"))])
            .build();
        assert!(matches!(build_asg(&t, ser()), Err(AsgError::Integrity { txn: 2, .. })));
    }

    #[test]
    fn version_order_cycle_is_rejected() {
        let t = TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1")])
            .txn(2, 2, vec![put("x", "2")])
            .hints(|h| {
                h.version_order.insert(("x".into(), 1, 2));
                h.version_order.insert(("x".into(), 2, 1));
            })
            .build();
        assert!(matches!(build_asg(&t, ser()), Err(AsgError::VerOrderCycle { .. })));
    }

    #[test]
    fn realtime_cover_is_transitively_complete() {
        // Sequential t1, t2, t3 plus t4 overlapping t2.
        let mk = |id, b, c| fixtures::timed_txn(id, b, c);
        let txns = [mk(1, 0, 10), mk(2, 20, 30), mk(3, 40, 50), mk(4, 15, 35)];
        let cover = realtime_cover(txns.iter());
        assert_eq!(cover, vec![(1, 2), (1, 4), (2, 3), (4, 3)]);
        // Brute force: every real-time pair is reachable through the cover.
        for a in &txns {
            for b in &txns {
                if a.ts_commit.unwrap() < b.ts_begin.unwrap() {
                    let mut frontier = vec![a.id];
                    let mut seen = BTreeSet::new();
                    while let Some(n) = frontier.pop() {
                        for (x, y) in &cover {
                            if *x == n && seen.insert(*y) {
                                frontier.push(*y);
                            }
                        }
                    }
                    assert!(seen.contains(&b.id), "{} -> {}", a.id, b.id);
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let t = fixtures::phantom_write_skew();
        let a = asg_to_json(&build_asg(&t, ser()).unwrap());
        let b = asg_to_json(&build_asg(&t, ser()).unwrap());
        assert_eq!(a, b);
    }
}
