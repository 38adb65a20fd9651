// SPDX-License-Identifier: Apache-2.0

//! Small random traces from a deliberately faulty store: transactions may
//! read stale snapshots, reads are occasionally corrupted and some
//! transactions abort. Roughly half of the traces are serializable.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::generate::sequential_txn;
use crate::trace::{IterItem, Key, OperationKind, RyowPolicy, Trace, TxnId, TxnStatus, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomTraceConfig {
    pub num_keys: usize,
    pub max_txns: usize,
    pub max_ops: usize,
    /// How many commits behind a snapshot may be.
    pub max_staleness: usize,
    pub corrupt_pct: u32,
    pub abort_pct: u32,
}

impl Default for RandomTraceConfig {
    fn default() -> Self {
        RandomTraceConfig { num_keys: 5, max_txns: 10, max_ops: 4, max_staleness: 2, corrupt_pct: 5, abort_pct: 10 }
    }
}

fn key(i: usize) -> Key {
    Key::from(((b'a' + i as u8) as char).to_string())
}

/// Key state plus the committed transaction that produced it.
type State = BTreeMap<Key, (Option<Value>, Option<TxnId>)>;

struct Gen {
    cfg: RandomTraceConfig,
    rng: ChaCha8Rng,
    unique: bool,
    counter: u64,
}

impl Gen {
    fn value(&mut self) -> Value {
        self.counter += 1;
        if self.unique {
            Value::from(format!("v{}", self.counter))
        } else {
            Value::from(["p", "q", "r"][self.rng.random_range(0..3)])
        }
    }

    fn pct(&mut self, p: u32) -> bool {
        self.rng.random_range(0..100) < p
    }

    fn corrupt(&mut self, v: Option<Value>) -> Option<Value> {
        if !self.pct(self.cfg.corrupt_pct) {
            return v;
        }
        match self.rng.random_range(0..3) {
            0 => None,
            1 => Some(Value::from(format!("bogus{}", self.rng.random_range(0..1000)))),
            _ => Some(self.value()),
        }
    }

    fn range(&mut self) -> (Key, Key) {
        let lo = self.rng.random_range(0..self.cfg.num_keys);
        let hi = self.rng.random_range(lo + 1..=self.cfg.num_keys);
        (key(lo), key(hi))
    }
}

/// What a read of `k` returns: the own write, the snapshot's state, or a
/// coin flip between them, per the read-your-writes policy.
fn read_own(
    g: &mut Gen,
    policy: RyowPolicy,
    own: &BTreeMap<Key, Option<Value>>,
    snap: &State,
    k: &Key,
) -> (Option<Value>, bool) {
    let external = || snap.get(k).and_then(|(v, _)| v.clone());
    match own.get(k) {
        Some(v) => match policy {
            RyowPolicy::MustOwn => (v.clone(), true),
            RyowPolicy::MustExternal => (external(), false),
            RyowPolicy::Either if g.rng.random_bool(0.5) => (v.clone(), true),
            RyowPolicy::Either => (external(), false),
        },
        None => (external(), false),
    }
}

/// Items a range read returns over `[start, end)`. A key counts as present
/// when it holds a value, or a tombstone under the tombstone hint.
fn range_read(
    g: &mut Gen,
    t: &Trace,
    own: &BTreeMap<Key, Option<Value>>,
    snap: &State,
    start: &Key,
    end: &Key,
) -> Vec<(Key, Option<Value>)> {
    let mut out = Vec::new();
    for i in 0..g.cfg.num_keys {
        let k = key(i);
        if &k < start || &k >= end {
            continue;
        }
        let touched = own.contains_key(&k) || snap.contains_key(&k);
        let (v, _) = read_own(g, t.hints.ryow, own, snap, &k);
        let v = g.corrupt(v);
        if v.is_some() || (t.hints.tombstones && touched && v.is_none()) {
            out.push((k, v));
        }
    }
    out
}

/// A random trace of at most `cfg.max_txns` transactions.
pub fn random_small_trace(seed: u64, cfg: RandomTraceConfig) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unique = rng.random_bool(0.5);
    let mut g = Gen { cfg, rng, unique, counter: 0 };
    let mut t = Trace::default();
    t.hints.tombstones = g.rng.random_bool(0.5);
    t.hints.session_order = g.rng.random_bool(0.5);
    t.hints.real_time = g.rng.random_bool(0.5);
    t.hints.unique_values = unique && g.rng.random_bool(0.7);
    t.hints.ryow = [RyowPolicy::MustOwn, RyowPolicy::MustExternal, RyowPolicy::Either][g.rng.random_range(0..3)];
    let version_sets = g.rng.random_bool(0.3);

    let mut init = State::new();
    for i in 0..cfg.num_keys {
        if g.rng.random_bool(0.5) {
            let v = if unique { Value::from(format!("i{i}")) } else { Value::from(["p", "q", "r"][i % 3]) };
            t.initial.insert(key(i), v.clone());
            init.insert(key(i), (Some(v), None));
        }
    }
    let mut history = vec![init];
    let sessions = g.rng.random_range(1..=3u64);
    let n = g.rng.random_range(1..=cfg.max_txns);
    let mut seq = 0u64;
    // Committed writers of each key in installation order.
    let mut installs: BTreeMap<Key, Vec<TxnId>> = BTreeMap::new();

    for i in 0..n {
        let id = i as TxnId + 1;
        let lag = if g.rng.random_bool(0.6) { 0 } else { g.rng.random_range(0..=cfg.max_staleness) };
        let lag = lag.min(history.len() - 1);
        let snap = history[history.len() - 1 - lag].clone();
        let mut own: BTreeMap<Key, Option<Value>> = BTreeMap::new();
        let mut body = Vec::new();
        let mut pins = Vec::new();
        let mut iter_id = 0;
        for _ in 0..g.rng.random_range(0..=cfg.max_ops) {
            let op_seq = seq + 1 + body.len() as u64;
            match g.rng.random_range(0..6) {
                0 | 1 => {
                    let key = key(g.rng.random_range(0..cfg.num_keys));
                    let (v, _) = read_own(&mut g, t.hints.ryow, &own, &snap, &key);
                    body.push(OperationKind::Get { result: g.corrupt(v), key });
                }
                2 => {
                    let key = key(g.rng.random_range(0..cfg.num_keys));
                    let value = g.value();
                    own.insert(key.clone(), Some(value.clone()));
                    body.push(OperationKind::Put { key, value });
                }
                3 => {
                    let key = key(g.rng.random_range(0..cfg.num_keys));
                    own.insert(key.clone(), None);
                    body.push(OperationKind::Delete { key });
                }
                4 => {
                    let (start, end) = g.range();
                    let results = range_read(&mut g, &t, &own, &snap, &start, &end);
                    pins.push((op_seq, start.clone(), end.clone()));
                    body.push(OperationKind::Scan { start, end, results });
                }
                _ => {
                    let (start, end) = g.range();
                    let items = range_read(&mut g, &t, &own, &snap, &start, &end);
                    let k = g.rng.random_range(1..=3);
                    let iter = iter_id;
                    iter_id += 1;
                    pins.push((op_seq, start.clone(), end.clone()));
                    body.push(OperationKind::IterOpen { iter, start, end });
                    for (key, v) in items.iter().take(k) {
                        body.push(OperationKind::IterNext { iter, result: IterItem::Item(key.clone(), v.clone()) });
                    }
                    if items.len() < k {
                        body.push(OperationKind::IterNext { iter, result: IterItem::Exhausted });
                    }
                }
            }
        }
        if version_sets {
            for (op_seq, start, end) in pins {
                let set: Vec<(Key, Option<TxnId>)> = (0..cfg.num_keys)
                    .map(|j| key(j))
                    .filter(|k| k >= &start && k < &end)
                    .map(|k| {
                        let w = snap.get(&k).and_then(|(_, w)| *w);
                        (k, w)
                    })
                    .collect();
                if !set.is_empty() {
                    t.hints.version_sets.insert((id, op_seq), set);
                }
            }
        }

        let committed = !g.pct(cfg.abort_pct);
        let status = if committed { TxnStatus::Committed } else { TxnStatus::Aborted };
        let ts = ((10 * (i - lag)) as u64 + 1, 10 * i as u64 + 5);
        let session = g.rng.random_range(0..sessions);
        t.push(sequential_txn(id, session, &mut seq, body, status, ts));
        if committed {
            let mut next = history.last().expect("non-empty").clone();
            for (k, v) in own {
                installs.entry(k.clone()).or_default().push(id);
                next.insert(k, (v, Some(id)));
            }
            history.push(next);
        }
    }

    if g.rng.random_bool(0.2) {
        for (k, ws) in installs {
            for w in ws.windows(2) {
                if g.rng.random_bool(0.5) {
                    t.hints.version_order.insert((k.clone(), w[0], w[1]));
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::serializability_oracle;
    use crate::trace::validate_trace;

    #[test]
    fn traces_are_well_formed_and_mixed() {
        let mut accepted = 0;
        for seed in 0..200 {
            let t = random_small_trace(seed, RandomTraceConfig::default());
            assert_eq!(validate_trace(&t), vec![], "seed {seed}");
            if serializability_oracle(&t, false).unwrap().is_accept() {
                accepted += 1;
            }
        }
        assert!((40..=180).contains(&accepted), "{accepted} of 200 accepted");
    }

    #[test]
    fn deterministic_in_seed() {
        let c = RandomTraceConfig::default();
        assert_eq!(random_small_trace(3, c), random_small_trace(3, c));
    }
}
