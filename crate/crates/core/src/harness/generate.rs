// SPDX-License-Identifier: Apache-2.0

//! Traces produced by executing a workload serially against an in-memory
//! store, so every generated trace is serializable in generation order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HarnessError, ValueSpace, WorkloadProfile};
use crate::trace::{IterItem, Key, Operation, OperationKind, Trace, Transaction, TxnStatus, Value};

pub(super) type Store = BTreeMap<Key, Option<Value>>;

pub(super) fn key_name(i: usize) -> Key {
    Key::from(format!("k{i:06}"))
}

/// Committed state overlaid with one transaction's buffered writes.
pub(super) fn visible(store: &Store, own: &Store, k: &Key) -> Option<Value> {
    own.get(k).or_else(|| store.get(k)).cloned().flatten()
}

/// Entries of `[start, end)` in key order, tombstones included.
pub(super) fn range_items(store: &Store, own: &Store, start: &Key, end: &Key) -> Vec<(Key, Option<Value>)> {
    if start >= end {
        return Vec::new();
    }
    let mut merged: BTreeMap<Key, Option<Value>> =
        store.range(start.clone()..end.clone()).map(|(k, v)| (k.clone(), v.clone())).collect();
    merged.extend(own.range(start.clone()..end.clone()).map(|(k, v)| (k.clone(), v.clone())));
    merged.into_iter().collect()
}

enum OpChoice {
    Read,
    Write,
    Delete,
    Scan,
    Iter,
    Rmw,
}

fn choose(p: &WorkloadProfile, rng: &mut ChaCha8Rng) -> OpChoice {
    let m = &p.op_mix;
    let weights = [
        (m.read, OpChoice::Read),
        (m.write, OpChoice::Write),
        (m.delete, OpChoice::Delete),
        (m.scan, OpChoice::Scan),
        (m.iterator, OpChoice::Iter),
        (m.read_modify_write, OpChoice::Rmw),
    ];
    let total: u32 = weights.iter().map(|(w, _)| w).sum();
    let mut r = rng.random_range(0..total);
    for (w, c) in weights {
        if r < w {
            return c;
        }
        r -= w;
    }
    unreachable!("weights sum to total")
}

struct Gen<'p> {
    p: &'p WorkloadProfile,
    rng: ChaCha8Rng,
    counter: u64,
}

impl Gen<'_> {
    fn value(&mut self) -> Value {
        self.counter += 1;
        match self.p.value_space {
            ValueSpace::Unique => Value::from(format!("v{}", self.counter)),
            ValueSpace::DuplicateHeavy(c) => Value::from(format!("d{}", self.rng.random_range(0..c))),
        }
    }

    fn key(&mut self) -> Key {
        key_name(self.rng.random_range(0..self.p.num_keys))
    }

    fn range(&mut self) -> (Key, Key) {
        let lo = self.rng.random_range(0..self.p.num_keys);
        let span = self.rng.random_range(1..=self.p.scan_span_max);
        (key_name(lo), key_name(lo + span))
    }

    fn body(&mut self, store: &Store) -> (Vec<OperationKind>, Store) {
        let mut own = Store::new();
        let mut out = Vec::new();
        let mut iter_id = 0u64;
        for _ in 0..self.p.ops_per_txn {
            match choose(self.p, &mut self.rng) {
                OpChoice::Read => {
                    let key = self.key();
                    let result = visible(store, &own, &key);
                    out.push(OperationKind::Get { key, result });
                }
                OpChoice::Write => {
                    let key = self.key();
                    let value = self.value();
                    own.insert(key.clone(), Some(value.clone()));
                    out.push(OperationKind::Put { key, value });
                }
                OpChoice::Delete => {
                    let key = self.key();
                    own.insert(key.clone(), None);
                    out.push(OperationKind::Delete { key });
                }
                OpChoice::Scan => {
                    let (start, end) = self.range();
                    let results =
                        range_items(store, &own, &start, &end).into_iter().filter(|(_, v)| v.is_some()).collect();
                    out.push(OperationKind::Scan { start, end, results });
                }
                OpChoice::Iter => {
                    let (start, end) = self.range();
                    let k = self.rng.random_range(1..=self.p.iter_k_max);
                    let items: Vec<_> =
                        range_items(store, &own, &start, &end).into_iter().filter(|(_, v)| v.is_some()).collect();
                    let iter = iter_id;
                    iter_id += 1;
                    out.push(OperationKind::IterOpen { iter, start, end });
                    for (key, v) in items.iter().take(k) {
                        out.push(OperationKind::IterNext { iter, result: IterItem::Item(key.clone(), v.clone()) });
                    }
                    if items.len() < k {
                        out.push(OperationKind::IterNext { iter, result: IterItem::Exhausted });
                    }
                }
                OpChoice::Rmw => {
                    let key = self.key();
                    let result = visible(store, &own, &key);
                    out.push(OperationKind::Get { key: key.clone(), result });
                    let value = self.value();
                    own.insert(key.clone(), Some(value.clone()));
                    out.push(OperationKind::Put { key, value });
                }
            }
        }
        (out, own)
    }
}

/// Wraps a body in begin and commit events starting at `seq`.
pub(super) fn sequential_txn(
    id: u64,
    session: u64,
    seq: &mut u64,
    body: Vec<OperationKind>,
    status: TxnStatus,
    ts: (u64, u64),
) -> Transaction {
    let end = match status {
        TxnStatus::Aborted => OperationKind::Abort,
        _ => OperationKind::Commit,
    };
    let mut ops = Vec::with_capacity(body.len() + 2);
    for kind in std::iter::once(OperationKind::Begin).chain(body).chain(std::iter::once(end)) {
        ops.push(Operation { seq: *seq, kind });
        *seq += 1;
    }
    Transaction { id, session, ops, status, ts_begin: Some(ts.0), ts_commit: Some(ts.1) }
}

/// A serializable trace of `p.num_txns` committed transactions. Identical
/// profiles give identical traces.
pub fn generate_valid_trace(p: &WorkloadProfile) -> Result<Trace, HarnessError> {
    p.validate()?;
    let mut g = Gen { p, rng: ChaCha8Rng::seed_from_u64(p.seed), counter: 0 };
    let mut t = Trace::default();
    t.hints.session_order = true;
    t.hints.real_time = true;
    t.hints.unique_values = p.value_space == ValueSpace::Unique;

    let mut store = Store::new();
    let mut per_session = vec![0u64; p.sessions as usize];
    let mut seq = 0u64;
    for i in 0..p.num_txns {
        let s = g.rng.random_range(0..p.sessions) as usize;
        let id = (s as u64 + 1) * 1_000_000 + per_session[s];
        per_session[s] += 1;
        let (body, own) = g.body(&store);
        store.extend(own);
        let ts = (i as u64 * 1000, i as u64 * 1000 + 500);
        t.push(sequential_txn(id, s as u64, &mut seq, body, TxnStatus::Committed, ts));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::validate_trace;

    #[test]
    fn generation_is_deterministic() {
        let mut p = WorkloadProfile::randombench(50);
        p.seed = 7;
        let a = generate_valid_trace(&p).unwrap();
        assert_eq!(a, generate_valid_trace(&p).unwrap());
        p.seed = 8;
        assert_ne!(a, generate_valid_trace(&p).unwrap());
    }

    #[test]
    fn generated_traces_are_well_formed() {
        for mut p in [WorkloadProfile::blindw(200), WorkloadProfile::randombench(200)] {
            p.num_keys = 40;
            let t = generate_valid_trace(&p).unwrap();
            assert_eq!(t.committed_count(), 200);
            assert_eq!(validate_trace(&t), vec![]);
        }
    }

    #[test]
    fn duplicate_values_come_from_a_small_pool() {
        let mut p = WorkloadProfile::randombench(100);
        p.value_space = ValueSpace::DuplicateHeavy(3);
        let t = generate_valid_trace(&p).unwrap();
        assert!(!t.hints.unique_values);
        for txn in t.transactions.values() {
            for op in txn.body() {
                if let OperationKind::Put { value, .. } = &op.kind {
                    assert!(["d0", "d1", "d2"].contains(&value.to_string().as_str()));
                }
            }
        }
    }
}
