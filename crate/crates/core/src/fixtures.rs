// SPDX-License-Identifier: Apache-2.0

//! Hand-built traces shared by the test suites, plus a small builder for
//! writing more of them.

use crate::trace::{
    Hints, IterItem, Key, Operation, OperationKind, SessionId, Trace, Transaction, TxnId, TxnStatus, Value,
};

pub fn put(k: &str, v: &str) -> OperationKind {
    OperationKind::Put { key: k.into(), value: v.into() }
}

pub fn get(k: &str, v: Option<&str>) -> OperationKind {
    OperationKind::Get { key: k.into(), result: v.map(Value::from) }
}

pub fn del(k: &str) -> OperationKind {
    OperationKind::Delete { key: k.into() }
}

pub fn scan(start: &str, end: &str, results: &[(&str, Option<&str>)]) -> OperationKind {
    OperationKind::Scan {
        start: start.into(),
        end: end.into(),
        results: results.iter().map(|(k, v)| (Key::from(*k), v.map(Value::from))).collect(),
    }
}

pub fn iter_open(iter: u64, start: &str, end: &str) -> OperationKind {
    OperationKind::IterOpen { iter, start: start.into(), end: end.into() }
}

/// `None` is the end of the iterator.
pub fn iter_next(iter: u64, item: Option<(&str, Option<&str>)>) -> OperationKind {
    let result = match item {
        Some((k, v)) => IterItem::Item(k.into(), v.map(Value::from)),
        None => IterItem::Exhausted,
    };
    OperationKind::IterNext { iter, result }
}

fn wrap(id: TxnId, session: SessionId, first_seq: u64, body: Vec<OperationKind>, end: OperationKind) -> Transaction {
    let mut ops = Vec::with_capacity(body.len() + 2);
    ops.push(OperationKind::Begin);
    ops.extend(body);
    let status = match end {
        OperationKind::Abort => TxnStatus::Aborted,
        _ => TxnStatus::Committed,
    };
    ops.push(end);
    let ops: Vec<Operation> =
        ops.into_iter().enumerate().map(|(i, kind)| Operation { seq: first_seq + i as u64, kind }).collect();
    let ts_commit = ops.last().map(|op| op.seq);
    Transaction { id, session, ops, status, ts_begin: Some(first_seq), ts_commit }
}

/// A committed transaction whose events occupy consecutive sequence numbers
/// from `first_seq`. Clock readings equal sequence numbers.
pub fn txn(id: TxnId, session: SessionId, first_seq: u64, body: Vec<OperationKind>) -> Transaction {
    wrap(id, session, first_seq, body, OperationKind::Commit)
}

/// An empty committed transaction with the given clock readings.
pub fn timed_txn(id: TxnId, ts_begin: u64, ts_commit: u64) -> Transaction {
    let mut t = txn(id, id, ts_begin, Vec::new());
    t.ts_begin = Some(ts_begin);
    t.ts_commit = Some(ts_commit);
    t
}

#[derive(Clone, Debug, Default)]
pub struct TraceBuilder {
    trace: Trace,
    seq: u64,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn init(mut self, k: &str, v: &str) -> Self {
        self.trace.initial.insert(k.into(), v.into());
        self
    }

    pub fn hints(mut self, f: impl FnOnce(&mut Hints)) -> Self {
        f(&mut self.trace.hints);
        self
    }

    /// Appends a committed transaction after everything logged so far.
    pub fn txn(mut self, id: TxnId, session: SessionId, body: Vec<OperationKind>) -> Self {
        let t = txn(id, session, self.seq, body);
        self.seq = t.interval().1 + 1;
        self.trace.push(t);
        self
    }

    pub fn aborted(mut self, id: TxnId, session: SessionId, body: Vec<OperationKind>) -> Self {
        let t = wrap(id, session, self.seq, body, OperationKind::Abort);
        self.seq = t.interval().1 + 1;
        self.trace.push(t);
        self
    }

    /// Appends committed transactions that all begin before any of them
    /// commits. Sessions must be distinct.
    pub fn concurrent(mut self, txns: Vec<(TxnId, SessionId, Vec<OperationKind>)>) -> Self {
        let n = txns.len() as u64;
        let begin0 = self.seq;
        let mut seq = begin0 + n;
        let mut built = Vec::new();
        for (i, (id, session, body)) in txns.into_iter().enumerate() {
            let mut ops = vec![Operation { seq: begin0 + i as u64, kind: OperationKind::Begin }];
            for kind in body {
                ops.push(Operation { seq, kind });
                seq += 1;
            }
            built.push(Transaction {
                id,
                session,
                ops,
                status: TxnStatus::Committed,
                ts_begin: Some(begin0 + i as u64),
                ts_commit: None,
            });
        }
        for t in &mut built {
            t.ops.push(Operation { seq, kind: OperationKind::Commit });
            t.ts_commit = Some(seq);
            seq += 1;
        }
        self.seq = seq;
        for t in built {
            self.trace.push(t);
        }
        self
    }

    pub fn build(self) -> Trace {
        self.trace
    }
}

/// S1: T1 put(x,1); T2 get(x)->1, put(x,2). S2: T3 get(x)->2.
pub fn tau0() -> Trace {
    TraceBuilder::new()
        .txn(1, 1, vec![put("x", "1")])
        .txn(2, 1, vec![get("x", Some("1")), put("x", "2")])
        .txn(3, 2, vec![get("x", Some("2"))])
        .build()
}

/// One of the four knowledge settings of the four-transaction toy trace:
/// T1 and T2 and T4 write x, T3 reads T2's value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToySetting {
    /// Version order known, values distinct.
    A,
    /// Version order unknown, values distinct.
    B,
    /// Version order known, T2 and T4 write the same value.
    C,
    /// Neither.
    D,
}

impl ToySetting {
    pub const ALL: [ToySetting; 4] = [ToySetting::A, ToySetting::B, ToySetting::C, ToySetting::D];
}

pub fn toy(setting: ToySetting) -> Trace {
    let distinct = matches!(setting, ToySetting::A | ToySetting::B);
    let (v2, v4) = if distinct { ("5_T2", "5_T4") } else { ("5", "5") };
    let ordered = matches!(setting, ToySetting::A | ToySetting::C);
    TraceBuilder::new()
        .txn(1, 1, vec![put("x", "3")])
        .txn(2, 2, vec![put("x", v2)])
        .txn(3, 3, vec![get("x", Some(v2))])
        .txn(4, 4, vec![put("x", v4)])
        .hints(|h| {
            if ordered {
                h.version_order.insert(("x".into(), 1, 2));
                h.version_order.insert(("x".into(), 2, 4));
            }
        })
        .build()
}

/// Two transactions read the same initial value and both overwrite it.
pub fn lost_update() -> Trace {
    TraceBuilder::new()
        .init("k", "0")
        .concurrent(vec![
            (1, 1, vec![get("k", Some("0")), put("k", "1")]),
            (2, 2, vec![get("k", Some("0")), put("k", "2")]),
        ])
        .build()
}

/// A reader sees x before and y after a writer that updated both.
pub fn read_skew() -> Trace {
    TraceBuilder::new()
        .init("x", "0")
        .init("y", "0")
        .concurrent(vec![
            (1, 1, vec![put("x", "1"), put("y", "1")]),
            (2, 2, vec![get("x", Some("0")), get("y", Some("1"))]),
        ])
        .build()
}

/// Each transaction reads the other's write.
pub fn g1c() -> Trace {
    TraceBuilder::new()
        .concurrent(vec![
            (1, 1, vec![put("x", "1"), get("y", Some("2"))]),
            (2, 2, vec![put("y", "2"), get("x", Some("1"))]),
        ])
        .build()
}

/// Version order hints put two writers in opposite orders on two keys.
pub fn dirty_write() -> Trace {
    TraceBuilder::new()
        .concurrent(vec![(1, 1, vec![put("x", "a1"), put("y", "a1")]), (2, 2, vec![put("x", "b2"), put("y", "b2")])])
        .hints(|h| {
            h.version_order.insert(("x".into(), 1, 2));
            h.version_order.insert(("y".into(), 2, 1));
        })
        .build()
}

/// A reader observes only half of another transaction's writes.
pub fn fractured_read() -> Trace {
    TraceBuilder::new()
        .init("x", "0")
        .init("y", "0")
        .txn(1, 1, vec![put("x", "1"), put("y", "1")])
        .txn(2, 2, vec![get("x", Some("1")), get("y", Some("0"))])
        .build()
}

/// A transaction starting after another committed still reads the older
/// state. Serializable, but not in real-time order.
pub fn time_inversion() -> Trace {
    TraceBuilder::new()
        .init("x", "0")
        .txn(1, 1, vec![put("x", "1")])
        .txn(2, 2, vec![get("x", Some("0"))])
        .hints(|h| h.real_time = true)
        .build()
}

/// Item write skew: each transaction reads both keys and writes one.
pub fn write_skew() -> Trace {
    TraceBuilder::new()
        .init("x", "0")
        .init("y", "0")
        .concurrent(vec![
            (1, 1, vec![get("x", Some("0")), get("y", Some("0")), put("x", "1")]),
            (2, 2, vec![get("x", Some("0")), get("y", Some("0")), put("y", "2")]),
        ])
        .build()
}

/// Predicate write skew: each transaction scans an empty range and inserts
/// into it, neither seeing the other's insert.
pub fn phantom_write_skew() -> Trace {
    TraceBuilder::new()
        .concurrent(vec![
            (1, 1, vec![scan("a", "m", &[]), put("b", "1")]),
            (2, 2, vec![scan("a", "m", &[]), put("c", "2")]),
        ])
        .build()
}

/// A committed transaction reads an aborted write.
pub fn aborted_read() -> Trace {
    TraceBuilder::new()
        .txn(1, 1, vec![put("x", "1")])
        .aborted(2, 2, vec![put("x", "2")])
        .txn(3, 3, vec![get("x", Some("2"))])
        .build()
}

/// A committed transaction reads a value its writer later overwrote.
pub fn intermediate_read() -> Trace {
    TraceBuilder::new()
        .txn(1, 1, vec![put("x", "1"), put("x", "2")])
        .txn(2, 2, vec![get("x", Some("1"))])
        .build()
}

/// Two readers observe two independent writes in opposite orders.
pub fn long_fork() -> Trace {
    TraceBuilder::new()
        .init("x", "0")
        .init("y", "0")
        .concurrent(vec![
            (1, 1, vec![put("x", "1")]),
            (2, 2, vec![put("y", "1")]),
            (3, 3, vec![get("x", Some("1")), get("y", Some("0"))]),
            (4, 4, vec![get("x", Some("0")), get("y", Some("1"))]),
        ])
        .build()
}

/// A session does not see its own earlier transaction's write.
pub fn session_stale_read() -> Trace {
    TraceBuilder::new()
        .init("x", "0")
        .txn(1, 1, vec![put("x", "1")])
        .txn(2, 1, vec![get("x", Some("0"))])
        .hints(|h| h.session_order = true)
        .build()
}

/// Every trace the cross-checking suites run over, with a stable name.
pub fn corpus() -> Vec<(&'static str, Trace)> {
    let mut out: Vec<(&'static str, Trace)> = vec![
        ("empty", Trace::default()),
        ("tau0", tau0()),
        ("tau0_unique", {
            let mut t = tau0();
            t.hints.unique_values = true;
            t
        }),
        ("tau0_sessions", {
            let mut t = tau0();
            t.hints.session_order = true;
            t.hints.real_time = true;
            t
        }),
        ("toy_a", toy(ToySetting::A)),
        ("toy_b", toy(ToySetting::B)),
        ("toy_c", toy(ToySetting::C)),
        ("toy_d", toy(ToySetting::D)),
        ("lost_update", lost_update()),
        ("read_skew", read_skew()),
        ("g1c", g1c()),
        ("dirty_write", dirty_write()),
        ("fractured_read", fractured_read()),
        ("time_inversion", time_inversion()),
        ("write_skew", write_skew()),
        ("phantom_write_skew", phantom_write_skew()),
        ("aborted_read", aborted_read()),
        ("intermediate_read", intermediate_read()),
        ("long_fork", long_fork()),
        ("session_stale_read", session_stale_read()),
    ];
    out.push((
        "delete_then_null_read",
        TraceBuilder::new()
            .init("x", "0")
            .txn(1, 1, vec![del("x")])
            .txn(2, 2, vec![get("x", None)])
            .txn(3, 3, vec![put("x", "3")])
            .build(),
    ));
    out.push((
        "null_read_of_initial_key",
        TraceBuilder::new().init("x", "0").txn(1, 1, vec![get("x", None)]).build(),
    ));
    out.push((
        "scan_sees_live_keys",
        TraceBuilder::new()
            .init("a", "0")
            .txn(1, 1, vec![put("b", "1"), del("a")])
            .txn(2, 2, vec![scan("a", "z", &[("b", Some("1"))])])
            .build(),
    ));
    out.push((
        "scan_misses_initial_key",
        TraceBuilder::new().init("a", "0").txn(1, 1, vec![scan("a", "z", &[])]).build(),
    ));
    out.push((
        "scan_with_tombstones",
        TraceBuilder::new()
            .txn(1, 1, vec![put("a", "1"), put("b", "1")])
            .txn(2, 2, vec![del("b")])
            .txn(3, 3, vec![scan("a", "z", &[("a", Some("1")), ("b", None)])])
            .hints(|h| h.tombstones = true)
            .build(),
    ));
    out.push((
        "tombstone_missing_but_deleted",
        TraceBuilder::new()
            .txn(1, 1, vec![put("a", "1")])
            .txn(2, 2, vec![del("a")])
            .txn(3, 3, vec![scan("a", "z", &[])])
            .hints(|h| h.tombstones = true)
            .build(),
    ));
    out.push((
        "iterator_prefix",
        TraceBuilder::new()
            .init("a", "0")
            .init("c", "0")
            .init("e", "0")
            .txn(1, 1, vec![put("b", "1")])
            .txn(
                2,
                2,
                vec![iter_open(1, "a", "z"), iter_next(1, Some(("a", Some("0")))), iter_next(1, Some(("b", Some("1"))))],
            )
            .build(),
    ));
    out.push((
        "iterator_skips_key",
        TraceBuilder::new()
            .init("a", "0")
            .init("c", "0")
            .txn(1, 1, vec![put("b", "1")])
            .txn(
                2,
                2,
                vec![iter_open(1, "a", "z"), iter_next(1, Some(("a", Some("0")))), iter_next(1, Some(("c", Some("0"))))],
            )
            .build(),
    ));
    out.push((
        "iterator_exhausted",
        TraceBuilder::new()
            .init("a", "0")
            .txn(1, 1, vec![put("b", "1")])
            .txn(2, 2, vec![iter_open(1, "a", "c"), iter_next(1, Some(("a", Some("0")))), iter_next(1, None)])
            .build(),
    ));
    out.push((
        "iterator_sees_own_write",
        TraceBuilder::new()
            .txn(
                1,
                1,
                vec![put("b", "1"), iter_open(1, "a", "z"), put("c", "1"), iter_next(1, Some(("b", Some("1")))), iter_next(1, None)],
            )
            .build(),
    ));
    out.push((
        "ryow_either_external",
        TraceBuilder::new()
            .init("x", "0")
            .txn(1, 1, vec![put("x", "1"), get("x", Some("0"))])
            .hints(|h| h.ryow = crate::trace::RyowPolicy::Either)
            .build(),
    ));
    out.push((
        "ryow_must_external",
        TraceBuilder::new()
            .init("x", "0")
            .txn(1, 1, vec![put("x", "1")])
            .txn(2, 2, vec![put("x", "2"), get("x", Some("1"))])
            .hints(|h| h.ryow = crate::trace::RyowPolicy::MustExternal)
            .build(),
    ));
    out.push((
        "ryow_must_own_violated",
        TraceBuilder::new().init("x", "0").txn(1, 1, vec![put("x", "1"), get("x", Some("0"))]).build(),
    ));
    out.push((
        "version_set_pins_writer",
        TraceBuilder::new()
            .txn(1, 1, vec![put("a", "v")])
            .txn(2, 2, vec![put("a", "v")])
            .txn(3, 3, vec![scan("a", "z", &[("a", Some("v"))])])
            .hints(|h| {
                h.version_sets.insert((3, 7), vec![("a".into(), Some(1))]);
            })
            .build(),
    ));
    out.push((
        "duplicate_values_chain",
        TraceBuilder::new()
            .init("x", "0")
            .txn(1, 1, vec![get("x", Some("0")), put("x", "1")])
            .txn(2, 2, vec![get("x", Some("1")), put("x", "0")])
            .txn(3, 3, vec![get("x", Some("0")), put("x", "1")])
            .txn(4, 4, vec![get("x", Some("1"))])
            .build(),
    ));
    out.push((
        "aborted_write_unread",
        TraceBuilder::new()
            .txn(1, 1, vec![put("x", "1")])
            .aborted(2, 2, vec![put("x", "2")])
            .txn(3, 3, vec![get("x", Some("1"))])
            .build(),
    ));
    out.push((
        "serial_bank_transfer",
        TraceBuilder::new()
            .init("a", "10")
            .init("b", "10")
            .txn(1, 1, vec![get("a", Some("10")), get("b", Some("10")), put("a", "5"), put("b", "15")])
            .txn(2, 2, vec![get("a", Some("5")), get("b", Some("15")), put("a", "0"), put("b", "20")])
            .txn(3, 1, vec![scan("a", "c", &[("a", Some("0")), ("b", Some("20"))])])
            .hints(|h| h.session_order = true)
            .build(),
    ));
    out
}
