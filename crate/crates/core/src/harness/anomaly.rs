// SPDX-License-Identifier: Apache-2.0

//! Appends known isolation anomalies to a trace. Each anomaly uses fresh
//! keys and sessions, so it does not interact with the existing history.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::generate::sequential_txn;
use super::HarnessError;
use crate::trace::{Key, Operation, OperationKind, Trace, Transaction, TxnStatus, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// Two transactions read one version and both overwrite it.
    LostUpdate,
    /// A reader sees one write of a transaction but not its other write,
    /// having read the other key before it.
    ReadSkew,
    /// Each of two transactions reads the other's write.
    G1cWriteReadCycle,
    /// Two writers of two keys, ordered oppositely on each key.
    DirtyWritePair,
    /// A reader sees part of a transaction's writes.
    FracturedRead,
    /// A transaction misses a write that committed before it began.
    TimeInversion,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 6] = [
        AnomalyKind::LostUpdate,
        AnomalyKind::ReadSkew,
        AnomalyKind::G1cWriteReadCycle,
        AnomalyKind::DirtyWritePair,
        AnomalyKind::FracturedRead,
        AnomalyKind::TimeInversion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::LostUpdate => "lost_update",
            AnomalyKind::ReadSkew => "read_skew",
            AnomalyKind::G1cWriteReadCycle => "g1c",
            AnomalyKind::DirtyWritePair => "dirty_write",
            AnomalyKind::FracturedRead => "fractured_read",
            AnomalyKind::TimeInversion => "time_inversion",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown anomaly {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub count: usize,
}

const FRESH_ATTEMPTS: usize = 64;

struct Appender<'t> {
    t: &'t mut Trace,
    used_keys: BTreeSet<Key>,
    next_id: u64,
    next_session: u64,
    seq: u64,
    clock: u64,
}

fn trace_keys(t: &Trace) -> BTreeSet<Key> {
    let mut keys: BTreeSet<Key> = t.initial.keys().cloned().collect();
    for txn in t.transactions.values() {
        for op in &txn.ops {
            match &op.kind {
                OperationKind::Put { key, .. } | OperationKind::Get { key, .. } | OperationKind::Delete { key } => {
                    keys.insert(key.clone());
                }
                OperationKind::Scan { start, end, results } => {
                    keys.insert(start.clone());
                    keys.insert(end.clone());
                    keys.extend(results.iter().map(|(k, _)| k.clone()));
                }
                OperationKind::IterOpen { start, end, .. } => {
                    keys.insert(start.clone());
                    keys.insert(end.clone());
                }
                OperationKind::IterNext { result: crate::trace::IterItem::Item(k, _), .. } => {
                    keys.insert(k.clone());
                }
                _ => {}
            }
        }
    }
    keys
}

/// Whether `k` falls inside any range query of the trace.
fn in_some_range(t: &Trace, k: &Key) -> bool {
    t.transactions.values().flat_map(|txn| &txn.ops).any(|op| match &op.kind {
        OperationKind::Scan { start, end, .. } | OperationKind::IterOpen { start, end, .. } => start <= k && k < end,
        _ => false,
    })
}

impl<'t> Appender<'t> {
    fn new(t: &'t mut Trace) -> Self {
        let used_keys = trace_keys(t);
        let next_id = t.transactions.keys().next_back().map_or(1, |id| id + 1);
        let next_session = t.sessions.keys().next_back().map_or(0, |s| s + 1);
        let seq = t.next_seq();
        let clock = t
            .transactions
            .values()
            .flat_map(|x| [x.ts_begin, x.ts_commit])
            .flatten()
            .max()
            .map_or(0, |c| c + 1);
        Appender { t, used_keys, next_id, next_session, seq, clock }
    }

    fn fresh_key(&mut self, n: usize, role: &str) -> Result<Key, HarnessError> {
        for attempt in 0..FRESH_ATTEMPTS {
            let k = Key::from(format!("~anomaly{attempt}.{n}.{role}"));
            if !self.used_keys.contains(&k) && !in_some_range(self.t, &k) {
                self.used_keys.insert(k.clone());
                return Ok(k);
            }
        }
        Err(HarnessError::KeyspaceExhausted)
    }

    fn ids(&mut self, n: usize) -> Vec<(u64, u64)> {
        (0..n)
            .map(|_| {
                let out = (self.next_id, self.next_session);
                self.next_id += 1;
                self.next_session += 1;
                out
            })
            .collect()
    }

    /// All transactions begin, then `script` runs in order. Transactions the
    /// script does not commit commit at the end, in index order.
    fn interleaved(&mut self, n: usize, script: Vec<Step>) {
        let ids = self.ids(n);
        let mut txns: Vec<Transaction> = ids
            .iter()
            .map(|&(id, session)| {
                let op = Operation { seq: self.seq, kind: OperationKind::Begin };
                let ts = self.tick();
                Transaction {
                    id,
                    session,
                    ops: vec![op],
                    status: TxnStatus::Committed,
                    ts_begin: Some(ts),
                    ts_commit: None,
                }
            })
            .collect();
        let pending: Vec<Step> = (0..n).map(Step::Commit).collect();
        for step in script.into_iter().chain(pending) {
            match step {
                Step::Op(i, kind) => {
                    txns[i].ops.push(Operation { seq: self.seq, kind });
                    self.tick();
                }
                Step::Commit(i) if txns[i].ts_commit.is_none() => {
                    txns[i].ops.push(Operation { seq: self.seq, kind: OperationKind::Commit });
                    txns[i].ts_commit = Some(self.tick());
                }
                Step::Commit(_) => {}
            }
        }
        for txn in txns {
            self.t.push(txn);
        }
    }

    fn concurrent(&mut self, bodies: Vec<Vec<OperationKind>>) {
        let n = bodies.len();
        let script = bodies.into_iter().enumerate().flat_map(|(i, b)| b.into_iter().map(move |k| Step::Op(i, k)));
        self.interleaved(n, script.collect());
    }

    fn sequential(&mut self, bodies: Vec<Vec<OperationKind>>) {
        let ids = self.ids(bodies.len());
        for ((id, session), body) in ids.into_iter().zip(bodies) {
            let len = body.len() as u64 + 1;
            let ts = (self.clock, self.clock + len);
            let txn = sequential_txn(id, session, &mut self.seq, body, TxnStatus::Committed, ts);
            self.clock += len + 1;
            self.t.push(txn);
        }
    }

    /// Advances the event counter and clock together, returning the clock.
    fn tick(&mut self) -> u64 {
        let c = self.clock;
        self.seq += 1;
        self.clock += 1;
        c
    }

    fn inject(&mut self, kind: AnomalyKind, n: usize) -> Result<(), HarnessError> {
        let x = self.fresh_key(n, "x")?;
        let y = self.fresh_key(n, "y")?;
        let val = |k: &Key, tag: &str| Value::from(format!("{k}={tag}"));
        let (x0, y0) = (val(&x, "init"), val(&y, "init"));
        self.t.initial.insert(x.clone(), x0.clone());
        self.t.initial.insert(y.clone(), y0.clone());
        let put = |k: &Key, tag: &str| OperationKind::Put { key: k.clone(), value: val(k, tag) };
        let get = |k: &Key, v: &Value| OperationKind::Get { key: k.clone(), result: Some(v.clone()) };
        match kind {
            AnomalyKind::LostUpdate => self.concurrent(vec![
                vec![get(&x, &x0), put(&x, "a")],
                vec![get(&x, &x0), put(&x, "b")],
            ]),
            AnomalyKind::ReadSkew => self.interleaved(
                2,
                vec![
                    Step::Op(0, get(&x, &x0)),
                    Step::Op(1, put(&x, "b")),
                    Step::Op(1, put(&y, "b")),
                    Step::Commit(1),
                    Step::Op(0, get(&y, &val(&y, "b"))),
                ],
            ),
            AnomalyKind::G1cWriteReadCycle => self.concurrent(vec![
                vec![put(&x, "a"), get(&y, &val(&y, "b"))],
                vec![put(&y, "b"), get(&x, &val(&x, "a"))],
            ]),
            AnomalyKind::DirtyWritePair => {
                let (a, b) = (self.next_id, self.next_id + 1);
                self.concurrent(vec![vec![put(&x, "a"), put(&y, "a")], vec![put(&x, "b"), put(&y, "b")]]);
                self.t.hints.version_order.insert((x.clone(), a, b));
                self.t.hints.version_order.insert((y.clone(), b, a));
            }
            AnomalyKind::FracturedRead => self.concurrent(vec![
                vec![put(&x, "a"), put(&y, "a")],
                vec![get(&x, &val(&x, "a")), get(&y, &y0)],
            ]),
            AnomalyKind::TimeInversion => {
                self.t.hints.real_time = true;
                self.sequential(vec![vec![put(&x, "a")], vec![get(&x, &x0)]]);
            }
        }
        Ok(())
    }
}

enum Step {
    Op(usize, OperationKind),
    Commit(usize),
}

/// Returns a copy of `t` with `spec.count` instances of the anomaly
/// appended after its last event.
pub fn inject_anomaly(t: &Trace, spec: AnomalySpec) -> Result<Trace, HarnessError> {
    if spec.count == 0 {
        return Err(HarnessError::ZeroAnomalies);
    }
    let mut out = t.clone();
    let mut a = Appender::new(&mut out);
    for n in 0..spec.count {
        a.inject(spec.kind, n)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{check, CheckOptions};
    use crate::harness::{generate_valid_trace, WorkloadProfile};
    use crate::isolation::IsolationLevel::{self, *};
    use crate::trace::validate_trace;

    fn rejecting_levels(kind: AnomalyKind) -> &'static [IsolationLevel] {
        match kind {
            AnomalyKind::G1cWriteReadCycle | AnomalyKind::DirtyWritePair => &[Sser, Ser, Si, Rr, Rc],
            AnomalyKind::LostUpdate | AnomalyKind::ReadSkew | AnomalyKind::FracturedRead => &[Sser, Ser, Si, Rr],
            AnomalyKind::TimeInversion => &[Sser],
        }
    }

    #[test]
    fn anomalies_are_rejected_exactly_where_expected() {
        let mut p = WorkloadProfile::randombench(40);
        p.num_keys = 30;
        let base = generate_valid_trace(&p).unwrap();
        for kind in AnomalyKind::ALL {
            let t = inject_anomaly(&base, AnomalySpec { kind, count: 2 }).unwrap();
            assert_eq!(validate_trace(&t), vec![], "{kind}");
            assert_eq!(t.committed_count(), 44);
            for level in IsolationLevel::ALL {
                let v = check(&t, level, &CheckOptions::default()).unwrap().verdict;
                assert_eq!(v.is_reject(), rejecting_levels(kind).contains(&level), "{kind} at {level:?}");
            }
        }
    }

    #[test]
    fn zero_count_is_an_error() {
        let spec = AnomalySpec { kind: AnomalyKind::LostUpdate, count: 0 };
        assert_eq!(inject_anomaly(&Trace::default(), spec), Err(HarnessError::ZeroAnomalies));
    }

    #[test]
    fn colliding_keys_exhaust_the_keyspace() {
        let mut t = Trace::default();
        t.initial.insert(Key::from("~"), Value::from("0"));
        // One scan over every fresh name.
        t.push(sequential_txn(
            1,
            0,
            &mut 0,
            vec![OperationKind::Scan { start: Key::from("~"), end: Key::from("~~"), results: vec![] }],
            TxnStatus::Committed,
            (0, 1),
        ));
        let spec = AnomalySpec { kind: AnomalyKind::LostUpdate, count: 1 };
        assert_eq!(inject_anomaly(&t, spec), Err(HarnessError::KeyspaceExhausted));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in AnomalyKind::ALL {
            assert_eq!(kind.as_str().parse::<AnomalyKind>(), Ok(kind));
        }
    }
}
