// SPDX-License-Identifier: Apache-2.0

//! Envelope-trace data model and the JSON Lines trace file format.
//!
//! A trace is everything a client observed: the operations it sent inside
//! transactions and the results the store returned. Keys and values are
//! opaque byte strings; range queries use lexicographic byte order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub type TxnId = u64;
pub type SessionId = u64;

pub const FORMAT_NAME: &str = "isochk-trace";
pub const FORMAT_VERSION: u64 = 1;

/// An opaque key. Ordering is lexicographic over the raw bytes.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(pub Vec<u8>);

/// An opaque value.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(pub Vec<u8>);

macro_rules! bytes_newtype {
    ($t:ident) => {
        impl $t {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        impl From<&str> for $t {
            fn from(s: &str) -> Self {
                $t(s.as_bytes().to_vec())
            }
        }

        impl From<String> for $t {
            fn from(s: String) -> Self {
                $t(s.into_bytes())
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&String::from_utf8_lossy(&self.0))
            }
        }

        impl fmt::Debug for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", String::from_utf8_lossy(&self.0))
            }
        }
    };
}

bytes_newtype!(Key);
bytes_newtype!(Value);

/// One item returned by a range query or iterator. `None` is a tombstone,
/// which stores only return when the tombstone hint is set.
pub type RangeItem = (Key, Option<Value>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IterItem {
    Item(Key, Option<Value>),
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OperationKind {
    Begin,
    Commit,
    Abort,
    Put { key: Key, value: Value },
    Get { key: Key, result: Option<Value> },
    Delete { key: Key },
    Scan { start: Key, end: Key, results: Vec<RangeItem> },
    IterOpen { iter: u64, start: Key, end: Key },
    IterNext { iter: u64, result: IterItem },
}

impl OperationKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperationKind::Begin => "begin",
            OperationKind::Commit => "commit",
            OperationKind::Abort => "abort",
            OperationKind::Put { .. } => "put",
            OperationKind::Get { .. } => "get",
            OperationKind::Delete { .. } => "del",
            OperationKind::Scan { .. } => "scan",
            OperationKind::IterOpen { .. } => "iter_open",
            OperationKind::IterNext { .. } => "iter_next",
        }
    }
}

/// An operation with its position in the global event log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation {
    pub seq: u64,
    pub kind: OperationKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxnStatus {
    Committed,
    Aborted,
    Ongoing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxnId,
    pub session: SessionId,
    pub ops: Vec<Operation>,
    pub status: TxnStatus,
    pub ts_begin: Option<u64>,
    pub ts_commit: Option<u64>,
}

impl Transaction {
    pub fn is_committed(&self) -> bool {
        self.status == TxnStatus::Committed
    }

    /// Sequence numbers of the first and last logged event.
    pub fn interval(&self) -> (u64, u64) {
        let first = self.ops.first().map_or(0, |op| op.seq);
        let last = self.ops.last().map_or(first, |op| op.seq);
        (first, last)
    }

    /// Operations between begin and commit/abort.
    pub fn body(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|op| {
            !matches!(
                op.kind,
                OperationKind::Begin | OperationKind::Commit | OperationKind::Abort
            )
        })
    }
}

/// What a read-after-own-write may observe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RyowPolicy {
    #[default]
    MustOwn,
    MustExternal,
    Either,
}

/// Optional knowledge logged alongside the trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hints {
    pub unique_values: bool,
    pub tombstones: bool,
    pub session_order: bool,
    pub real_time: bool,
    /// `(key, earlier writer, later writer)`.
    pub version_order: BTreeSet<(Key, TxnId, TxnId)>,
    /// Per predicate query `(txn, seq of scan or iter_open)`: the writer whose
    /// version of each in-range key the query observed. `None` is the initial state.
    pub version_sets: BTreeMap<(TxnId, u64), Vec<(Key, Option<TxnId>)>>,
    pub ryow: RyowPolicy,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub transactions: BTreeMap<TxnId, Transaction>,
    pub sessions: BTreeMap<SessionId, Vec<TxnId>>,
    pub hints: Hints,
    pub initial: BTreeMap<Key, Value>,
}

impl Trace {
    pub fn committed(&self) -> impl Iterator<Item = &Transaction> {
        self.transactions.values().filter(|t| t.is_committed())
    }

    pub fn committed_count(&self) -> usize {
        self.committed().count()
    }

    /// Next unused global event sequence number.
    pub fn next_seq(&self) -> u64 {
        self.transactions
            .values()
            .filter_map(|t| t.ops.last())
            .map(|op| op.seq + 1)
            .max()
            .unwrap_or(0)
    }

    /// Appends a transaction, registering it at the end of its session.
    pub fn push(&mut self, txn: Transaction) {
        self.sessions.entry(txn.session).or_default().push(txn.id);
        self.transactions.insert(txn.id, txn);
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: session {session} opens txn {txn} while txn {open} is still open")]
    InterleavedSession { line: usize, session: SessionId, open: TxnId, txn: TxnId },
    #[error("line {line}: operation for txn {txn} outside begin..commit/abort")]
    DanglingOp { line: usize, txn: TxnId },
    #[error("read error: {0}")]
    Io(String),
}

#[derive(Serialize, Deserialize)]
struct HeaderWire {
    format: String,
    version: u64,
    #[serde(default)]
    initial: BTreeMap<String, String>,
    #[serde(default)]
    hints: HintsWire,
}

#[derive(Default, Serialize, Deserialize)]
struct HintsWire {
    #[serde(default)]
    unique_values: bool,
    #[serde(default)]
    tombstones: bool,
    #[serde(default)]
    session_order: bool,
    #[serde(default)]
    real_time: bool,
    #[serde(default)]
    version_order: Vec<(String, TxnId, TxnId)>,
    #[serde(default)]
    version_sets: Vec<VersionSetWire>,
    #[serde(default)]
    ryow: RyowPolicy,
}

#[derive(Serialize, Deserialize)]
struct VersionSetWire {
    t: TxnId,
    q: u64,
    set: Vec<(String, Option<TxnId>)>,
}

#[derive(Serialize, Deserialize)]
struct EventWire {
    s: SessionId,
    t: TxnId,
    q: u64,
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    res: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    it: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ts: Option<u64>,
}

fn enc(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

struct LineCtx(usize);

impl LineCtx {
    fn err(&self, reason: impl Into<String>) -> ParseError {
        ParseError::MalformedRecord { line: self.0, reason: reason.into() }
    }

    fn dec(&self, s: &str) -> Result<Vec<u8>, ParseError> {
        B64.decode(s).map_err(|e| self.err(format!("bad base64 {s:?}: {e}")))
    }

    fn key(&self, field: &str, s: &Option<String>) -> Result<Key, ParseError> {
        match s {
            Some(s) => Ok(Key(self.dec(s)?)),
            None => Err(self.err(format!("missing field {field:?}"))),
        }
    }

    fn opt_value(&self, j: &Json) -> Result<Option<Value>, ParseError> {
        match j {
            Json::Null => Ok(None),
            Json::String(s) => Ok(Some(Value(self.dec(s)?))),
            other => Err(self.err(format!("expected base64 string or null, got {other}"))),
        }
    }

    fn item(&self, j: &Json) -> Result<RangeItem, ParseError> {
        match j.as_array().map(Vec::as_slice) {
            Some([Json::String(k), v]) => Ok((Key(self.dec(k)?), self.opt_value(v)?)),
            _ => Err(self.err(format!("expected [key, value] pair, got {j}"))),
        }
    }
}

fn event_to_kind(cx: &LineCtx, ev: &EventWire) -> Result<OperationKind, ParseError> {
    let res = ev.res.as_ref().unwrap_or(&Json::Null);
    Ok(match ev.op.as_str() {
        "begin" => OperationKind::Begin,
        "commit" => OperationKind::Commit,
        "abort" => OperationKind::Abort,
        "put" => OperationKind::Put {
            key: cx.key("k", &ev.k)?,
            value: Value(cx.dec(ev.v.as_deref().ok_or_else(|| cx.err("put without \"v\""))?)?),
        },
        "get" => OperationKind::Get { key: cx.key("k", &ev.k)?, result: cx.opt_value(res)? },
        "del" => OperationKind::Delete { key: cx.key("k", &ev.k)? },
        "scan" => {
            let items = match res {
                Json::Array(items) => items.iter().map(|j| cx.item(j)).collect::<Result<_, _>>()?,
                Json::Null => Vec::new(),
                other => return Err(cx.err(format!("scan result must be a list, got {other}"))),
            };
            OperationKind::Scan { start: cx.key("k", &ev.k)?, end: cx.key("k2", &ev.k2)?, results: items }
        }
        "iter_open" => OperationKind::IterOpen {
            iter: ev.it.ok_or_else(|| cx.err("iter_open without \"it\""))?,
            start: cx.key("k", &ev.k)?,
            end: cx.key("k2", &ev.k2)?,
        },
        "iter_next" => {
            let result = match res {
                Json::String(s) if s == "EXHAUSTED" => IterItem::Exhausted,
                j => {
                    let (k, v) = cx.item(j)?;
                    IterItem::Item(k, v)
                }
            };
            OperationKind::IterNext { iter: ev.it.ok_or_else(|| cx.err("iter_next without \"it\""))?, result }
        }
        other => return Err(cx.err(format!("unknown op {other:?}"))),
    })
}

fn hints_from_wire(cx: &LineCtx, w: HintsWire) -> Result<Hints, ParseError> {
    let mut version_order = BTreeSet::new();
    for (k, a, b) in w.version_order {
        version_order.insert((Key(cx.dec(&k)?), a, b));
    }
    let mut version_sets = BTreeMap::new();
    for vs in w.version_sets {
        let set = vs
            .set
            .into_iter()
            .map(|(k, w)| Ok((Key(cx.dec(&k)?), w)))
            .collect::<Result<Vec<_>, ParseError>>()?;
        version_sets.insert((vs.t, vs.q), set);
    }
    Ok(Hints {
        unique_values: w.unique_values,
        tombstones: w.tombstones,
        session_order: w.session_order,
        real_time: w.real_time,
        version_order,
        version_sets,
        ryow: w.ryow,
    })
}

/// Parses a trace file. Records must appear in log order; transactions left
/// open at end of input are `Ongoing`.
pub fn parse_trace<R: BufRead>(input: R) -> Result<Trace, ParseError> {
    let mut trace = Trace::default();
    let mut open_in_session: BTreeMap<SessionId, TxnId> = BTreeMap::new();
    let mut saw_header = false;

    for (idx, line) in input.lines().enumerate() {
        let cx = LineCtx(idx + 1);
        let line = line.map_err(|e| ParseError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: HeaderWire =
                serde_json::from_str(&line).map_err(|e| cx.err(format!("bad header: {e}")))?;
            if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
                return Err(cx.err(format!(
                    "unsupported format {:?} version {}",
                    header.format, header.version
                )));
            }
            for (k, v) in header.initial {
                trace.initial.insert(Key(cx.dec(&k)?), Value(cx.dec(&v)?));
            }
            trace.hints = hints_from_wire(&cx, header.hints)?;
            saw_header = true;
            continue;
        }

        let ev: EventWire = serde_json::from_str(&line).map_err(|e| cx.err(e.to_string()))?;
        let kind = event_to_kind(&cx, &ev)?;
        let op = Operation { seq: ev.q, kind };
        match op.kind {
            OperationKind::Begin => {
                if trace.transactions.contains_key(&ev.t) {
                    return Err(cx.err(format!("txn {} begins twice", ev.t)));
                }
                if let Some(&open) = open_in_session.get(&ev.s) {
                    return Err(ParseError::InterleavedSession {
                        line: cx.0,
                        session: ev.s,
                        open,
                        txn: ev.t,
                    });
                }
                open_in_session.insert(ev.s, ev.t);
                trace.push(Transaction {
                    id: ev.t,
                    session: ev.s,
                    ops: vec![op],
                    status: TxnStatus::Ongoing,
                    ts_begin: ev.ts,
                    ts_commit: None,
                });
            }
            _ => {
                if open_in_session.get(&ev.s) != Some(&ev.t) {
                    return Err(ParseError::DanglingOp { line: cx.0, txn: ev.t });
                }
                let txn = trace
                    .transactions
                    .get_mut(&ev.t)
                    .expect("open transaction is registered");
                match op.kind {
                    OperationKind::Commit | OperationKind::Abort => {
                        txn.status = if op.kind == OperationKind::Commit {
                            TxnStatus::Committed
                        } else {
                            TxnStatus::Aborted
                        };
                        txn.ts_commit = ev.ts;
                        open_in_session.remove(&ev.s);
                    }
                    _ => {}
                }
                txn.ops.push(op);
            }
        }
    }
    Ok(trace)
}

pub fn parse_trace_str(input: &str) -> Result<Trace, ParseError> {
    parse_trace(input.as_bytes())
}

// ---------------------------------------------------------------------------
// Serialization

fn item_json((k, v): &RangeItem) -> Json {
    Json::Array(vec![Json::String(enc(&k.0)), v.as_ref().map_or(Json::Null, |v| Json::String(enc(&v.0)))])
}

fn op_to_wire(txn: &Transaction, op: &Operation) -> EventWire {
    let mut ev = EventWire {
        s: txn.session,
        t: txn.id,
        q: op.seq,
        op: op.kind.name().to_string(),
        k: None,
        k2: None,
        v: None,
        res: None,
        it: None,
        ts: None,
    };
    match &op.kind {
        OperationKind::Begin => ev.ts = txn.ts_begin,
        OperationKind::Commit | OperationKind::Abort => ev.ts = txn.ts_commit,
        OperationKind::Put { key, value } => {
            ev.k = Some(enc(&key.0));
            ev.v = Some(enc(&value.0));
        }
        OperationKind::Get { key, result } => {
            ev.k = Some(enc(&key.0));
            ev.res = Some(result.as_ref().map_or(Json::Null, |v| Json::String(enc(&v.0))));
        }
        OperationKind::Delete { key } => ev.k = Some(enc(&key.0)),
        OperationKind::Scan { start, end, results } => {
            ev.k = Some(enc(&start.0));
            ev.k2 = Some(enc(&end.0));
            ev.res = Some(Json::Array(results.iter().map(item_json).collect()));
        }
        OperationKind::IterOpen { iter, start, end } => {
            ev.it = Some(*iter);
            ev.k = Some(enc(&start.0));
            ev.k2 = Some(enc(&end.0));
        }
        OperationKind::IterNext { iter, result } => {
            ev.it = Some(*iter);
            ev.res = Some(match result {
                IterItem::Exhausted => Json::String("EXHAUSTED".into()),
                IterItem::Item(k, v) => item_json(&(k.clone(), v.clone())),
            });
        }
    }
    ev
}

fn header_wire(t: &Trace) -> HeaderWire {
    let h = &t.hints;
    HeaderWire {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        initial: t.initial.iter().map(|(k, v)| (enc(&k.0), enc(&v.0))).collect(),
        hints: HintsWire {
            unique_values: h.unique_values,
            tombstones: h.tombstones,
            session_order: h.session_order,
            real_time: h.real_time,
            version_order: h.version_order.iter().map(|(k, a, b)| (enc(&k.0), *a, *b)).collect(),
            version_sets: h
                .version_sets
                .iter()
                .map(|(&(t, q), set)| VersionSetWire {
                    t,
                    q,
                    set: set.iter().map(|(k, w)| (enc(&k.0), *w)).collect(),
                })
                .collect(),
            ryow: h.ryow,
        },
    }
}

/// Writes the header line followed by every event in sequence order.
pub fn serialize_trace<W: Write>(t: &Trace, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &header_wire(t))?;
    out.write_all(b"\n")?;
    let mut events: Vec<(&Transaction, &Operation)> = t
        .transactions
        .values()
        .flat_map(|txn| txn.ops.iter().map(move |op| (txn, op)))
        .collect();
    events.sort_by_key(|(txn, op)| (op.seq, txn.id));
    for (txn, op) in events {
        serde_json::to_writer(&mut out, &op_to_wire(txn, op))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_trace_string(t: &Trace) -> String {
    let mut buf = Vec::new();
    serialize_trace(t, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace serialization is UTF-8")
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    MissingBegin(TxnId),
    MisplacedControl(TxnId),
    StatusMismatch(TxnId),
    ScanOrderViolation(TxnId),
    ScanRangeViolation(TxnId),
    IterOrderViolation(TxnId),
    IterRangeViolation(TxnId),
    ClockViolation(TxnId),
    SequenceOrder(TxnId),
    SessionInterleaving(SessionId),
    SessionPartition(TxnId),
    DanglingVersionOrder(TxnId, TxnId),
}

impl Violation {
    pub fn txn(&self) -> Option<TxnId> {
        use Violation::*;
        match *self {
            MissingBegin(t) | MisplacedControl(t) | StatusMismatch(t) | ScanOrderViolation(t)
            | ScanRangeViolation(t) | IterOrderViolation(t) | IterRangeViolation(t)
            | ClockViolation(t) | SequenceOrder(t) | SessionPartition(t) => Some(t),
            DanglingVersionOrder(a, _) => Some(a),
            SessionInterleaving(_) => None,
        }
    }
}

fn strictly_ascending<'a>(mut keys: impl Iterator<Item = &'a Key>) -> bool {
    let Some(mut prev) = keys.next() else { return true };
    for k in keys {
        if k <= prev {
            return false;
        }
        prev = k;
    }
    true
}

fn in_range(k: &Key, start: &Key, end: &Key) -> bool {
    start <= k && k < end
}

fn validate_txn(txn: &Transaction, out: &mut Vec<Violation>) {
    let id = txn.id;
    if txn.ops.first().map(|op| &op.kind) != Some(&OperationKind::Begin) {
        out.push(Violation::MissingBegin(id));
    }
    let last = txn.ops.last().map(|op| &op.kind);
    let terminal_ok = match txn.status {
        TxnStatus::Committed => last == Some(&OperationKind::Commit),
        TxnStatus::Aborted => last == Some(&OperationKind::Abort),
        TxnStatus::Ongoing => !matches!(last, Some(OperationKind::Commit | OperationKind::Abort)),
    };
    if !terminal_ok {
        out.push(Violation::StatusMismatch(id));
    }
    let n = txn.ops.len();
    for (i, op) in txn.ops.iter().enumerate() {
        let control_ok = match op.kind {
            OperationKind::Begin => i == 0,
            OperationKind::Commit | OperationKind::Abort => i + 1 == n,
            _ => true,
        };
        if !control_ok {
            out.push(Violation::MisplacedControl(id));
            break;
        }
    }
    if txn.ops.windows(2).any(|w| w[0].seq >= w[1].seq) {
        out.push(Violation::SequenceOrder(id));
    }
    if let (Some(b), Some(c)) = (txn.ts_begin, txn.ts_commit) {
        if c < b {
            out.push(Violation::ClockViolation(id));
        }
    }

    // iterator id -> (range, last key returned, exhausted)
    let mut iters: BTreeMap<u64, (Key, Key, Option<Key>, bool)> = BTreeMap::new();
    let (mut scan_order, mut scan_range, mut iter_order, mut iter_range) = (false, false, false, false);
    for op in txn.body() {
        match &op.kind {
            OperationKind::Scan { start, end, results } => {
                scan_order |= !strictly_ascending(results.iter().map(|(k, _)| k));
                scan_range |= results.iter().any(|(k, _)| !in_range(k, start, end));
            }
            OperationKind::IterOpen { iter, start, end } => {
                iters.insert(*iter, (start.clone(), end.clone(), None, false));
            }
            OperationKind::IterNext { iter, result } => {
                // Unknown iterators are reported by the ASG builder.
                let Some((start, end, last, exhausted)) = iters.get_mut(iter) else { continue };
                match result {
                    IterItem::Exhausted => *exhausted = true,
                    IterItem::Item(k, _) => {
                        if *exhausted || last.as_ref().is_some_and(|l| k <= l) {
                            iter_order = true;
                        }
                        if !in_range(k, start, end) {
                            iter_range = true;
                        }
                        *last = Some(k.clone());
                    }
                }
            }
            _ => {}
        }
    }
    for (flag, v) in [
        (scan_order, Violation::ScanOrderViolation(id)),
        (scan_range, Violation::ScanRangeViolation(id)),
        (iter_order, Violation::IterOrderViolation(id)),
        (iter_range, Violation::IterRangeViolation(id)),
    ] {
        if flag {
            out.push(v);
        }
    }
}

/// Checks every structural invariant of a trace. Violations are data, in a
/// deterministic order.
pub fn validate_trace(t: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    for txn in t.transactions.values() {
        validate_txn(txn, &mut out);
    }

    let mut seen = BTreeSet::new();
    for (sid, txns) in &t.sessions {
        let mut prev_end: Option<u64> = None;
        let mut interleaved = false;
        for id in txns {
            match t.transactions.get(id) {
                Some(txn) if txn.session == *sid && seen.insert(*id) => {
                    let (first, last) = txn.interval();
                    if prev_end.is_some_and(|e| first <= e) {
                        interleaved = true;
                    }
                    prev_end = Some(last);
                }
                _ => out.push(Violation::SessionPartition(*id)),
            }
        }
        if interleaved {
            out.push(Violation::SessionInterleaving(*sid));
        }
    }
    for id in t.transactions.keys() {
        if !seen.contains(id) {
            out.push(Violation::SessionPartition(*id));
        }
    }

    for (key, a, b) in &t.hints.version_order {
        let writes = |id: &TxnId| {
            t.transactions.get(id).is_some_and(|txn| {
                txn.body().any(|op| match &op.kind {
                    OperationKind::Put { key: k, .. } | OperationKind::Delete { key: k } => k == key,
                    _ => false,
                })
            })
        };
        if !writes(a) || !writes(b) {
            out.push(Violation::DanglingVersionOrder(*a, *b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn empty_input_is_empty_trace() {
        let t = parse_trace_str("").unwrap();
        assert!(t.transactions.is_empty());
    }

    #[test]
    fn empty_trace_serializes_to_header_only() {
        let s = serialize_trace_string(&Trace::default());
        assert_eq!(s.lines().count(), 1);
        assert!(s.starts_with(r#"{"format":"isochk-trace","version":1"#));
        assert_eq!(parse_trace_str(&s).unwrap(), Trace::default());
    }

    #[test]
    fn tau0_parses_and_round_trips() {
        let t = fixtures::tau0();
        let s = serialize_trace_string(&t);
        // header + 3 begins + 4 data ops + 3 commits
        assert_eq!(s.lines().count(), 11);
        let back = parse_trace_str(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.committed_count(), 3);
        assert_eq!(back.sessions[&1], vec![1, 2]);
        assert_eq!(back.sessions[&2], vec![3]);
        assert!(validate_trace(&back).is_empty());
    }

    #[test]
    fn ongoing_txn_has_no_commit_line() {
        let mut t = fixtures::tau0();
        let txn = t.transactions.get_mut(&3).unwrap();
        txn.ops.pop();
        txn.status = TxnStatus::Ongoing;
        txn.ts_commit = None;
        let s = serialize_trace_string(&t);
        assert_eq!(s.matches("\"commit\"").count(), 2);
        assert_eq!(parse_trace_str(&s).unwrap().transactions[&3].status, TxnStatus::Ongoing);
    }

    #[test]
    fn commit_before_begin_is_dangling() {
        let s = concat!(
            r#"{"format":"isochk-trace","version":1}"#,
            "\n",
            r#"{"s":1,"t":1,"q":0,"op":"commit"}"#,
            "\n"
        );
        assert_eq!(parse_trace_str(s), Err(ParseError::DanglingOp { line: 2, txn: 1 }));
    }

    #[test]
    fn interleaved_session_is_rejected() {
        let s = concat!(
            r#"{"format":"isochk-trace","version":1}"#,
            "\n",
            r#"{"s":1,"t":1,"q":0,"op":"begin"}"#,
            "\n",
            r#"{"s":1,"t":2,"q":1,"op":"begin"}"#,
            "\n"
        );
        assert!(matches!(parse_trace_str(s), Err(ParseError::InterleavedSession { open: 1, txn: 2, .. })));
    }

    #[test]
    fn malformed_fields_are_reported() {
        let header = r#"{"format":"isochk-trace","version":1}"#;
        for bad in [
            r#"{"s":1,"t":1,"q":0,"op":"begin"#,
            r#"{"s":"x","t":1,"q":0,"op":"begin"}"#,
            r#"{"s":1,"t":1,"q":0,"op":"launch"}"#,
        ] {
            let s = format!("{header}\n{bad}\n");
            assert!(matches!(parse_trace_str(&s), Err(ParseError::MalformedRecord { line: 2, .. })), "{bad}");
        }
        assert!(matches!(
            parse_trace_str(r#"{"format":"other","version":1}"#),
            Err(ParseError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn scan_out_of_order_is_a_violation() {
        let mut t = fixtures::tau0();
        let txn = t.transactions.get_mut(&3).unwrap();
        txn.ops.insert(
            2,
            Operation {
                seq: 100,
                kind: OperationKind::Scan {
                    start: "a".into(),
                    end: "z".into(),
                    results: vec![("y".into(), Some("1".into())), ("x".into(), Some("2".into()))],
                },
            },
        );
        txn.ops.last_mut().unwrap().seq = 101;
        assert_eq!(validate_trace(&t), vec![Violation::ScanOrderViolation(3)]);
    }

    #[test]
    fn clock_inversion_is_a_violation() {
        let mut t = fixtures::tau0();
        let txn = t.transactions.get_mut(&2).unwrap();
        txn.ts_begin = Some(50);
        txn.ts_commit = Some(10);
        assert_eq!(validate_trace(&t), vec![Violation::ClockViolation(2)]);
    }

    #[test]
    fn iterator_results_must_ascend() {
        let mut t = Trace::default();
        t.push(fixtures::txn(
            1,
            1,
            0,
            vec![
                OperationKind::IterOpen { iter: 7, start: "a".into(), end: "z".into() },
                OperationKind::IterNext { iter: 7, result: IterItem::Item("m".into(), Some("1".into())) },
                OperationKind::IterNext { iter: 7, result: IterItem::Item("c".into(), Some("1".into())) },
            ],
        ));
        assert_eq!(validate_trace(&t), vec![Violation::IterOrderViolation(1)]);
    }
}
