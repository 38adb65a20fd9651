// SPDX-License-Identifier: Apache-2.0

//! Reference serializability checker: searches serial orders of the
//! committed transactions directly, replaying each against a key-value
//! store. Exponential, so only for small traces.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use super::HarnessError;
use crate::par;
use crate::trace::{IterItem, Key, OperationKind, RyowPolicy, Trace, TxnId, Value};

pub const ORACLE_MAX_TXNS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    /// A serial order consistent with every observation and hint.
    Accept(Vec<TxnId>),
    Reject,
}

impl OracleVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, OracleVerdict::Accept(_))
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("order is not a permutation of the committed transactions")]
    NotAPermutation,
    #[error("T{txn} observes a state the order does not produce")]
    ReadMismatch { txn: TxnId },
    #[error("T{before} must precede T{after}")]
    OrderViolation { before: TxnId, after: TxnId },
}

const NEVER: u32 = 0;
const TOMB: u32 = 1;
const INIT: u32 = u32::MAX;
/// A writer that can never be the last writer of anything.
const NOBODY: u32 = u32::MAX - 1;

fn enc_value(v: u32) -> u32 {
    v + 2
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Slot {
    val: u32,
    /// Index of the last writer, or `INIT`.
    writer: u32,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Obs {
    Value(u32),
    Absent,
    Tombstone,
    Missing,
}

struct ReadCheck {
    key: usize,
    obs: Obs,
    own: Option<u32>,
    pin: Option<u32>,
}

#[derive(Default)]
struct Step {
    reads: Vec<ReadCheck>,
    writes: BTreeMap<usize, u32>,
    /// An observation no order can explain.
    impossible: bool,
}

struct Model {
    ids: Vec<TxnId>,
    steps: Vec<Step>,
    initial: Vec<Slot>,
    /// `(a, b)`: index `a` precedes index `b`.
    before: Vec<(usize, usize)>,
    /// `(ts_begin, ts_commit)` per index, when real time counts.
    clocks: Option<Vec<(Option<u64>, Option<u64>)>>,
    policy: RyowPolicy,
    unsatisfiable: bool,
}

fn own_matches(own: u32, obs: Obs) -> bool {
    match obs {
        Obs::Value(v) => own == enc_value(v),
        Obs::Absent | Obs::Tombstone => own == TOMB,
        Obs::Missing => false,
    }
}

fn ext_matches(val: u32, obs: Obs) -> bool {
    match obs {
        Obs::Value(v) => val == enc_value(v),
        Obs::Absent => val == NEVER || val == TOMB,
        Obs::Tombstone => val == TOMB,
        Obs::Missing => val == NEVER,
    }
}

impl Model {
    fn build(t: &Trace, strict: bool) -> Model {
        let committed: Vec<_> = t.committed().collect();
        let ids: Vec<TxnId> = committed.iter().map(|x| x.id).collect();
        let index: HashMap<TxnId, u32> = ids.iter().enumerate().map(|(i, id)| (*id, i as u32)).collect();

        let mut key_ix: BTreeMap<Key, usize> = BTreeMap::new();
        let mut values: HashMap<Value, u32> = HashMap::new();
        let mut intern_v = |v: &Value| {
            let n = values.len() as u32;
            enc_value(*values.entry(v.clone()).or_insert(n))
        };
        // Keys with an initial value or a committed writer.
        let mut live: BTreeSet<Key> = t.initial.keys().cloned().collect();
        for txn in &committed {
            for op in txn.body() {
                if let OperationKind::Put { key, .. } | OperationKind::Delete { key } = &op.kind {
                    live.insert(key.clone());
                }
            }
        }
        let kid = |k: &Key, key_ix: &mut BTreeMap<Key, usize>| {
            let n = key_ix.len();
            *key_ix.entry(k.clone()).or_insert(n)
        };
        for k in &live {
            kid(k, &mut key_ix);
        }

        let tombstones = t.hints.tombstones;
        let mut steps = Vec::with_capacity(committed.len());
        for txn in &committed {
            let mut step = Step::default();
            let mut own: BTreeMap<Key, u32> = BTreeMap::new();
            let item_obs = |v: &Option<Value>, intern_v: &mut dyn FnMut(&Value) -> u32| match v {
                Some(v) => Some(Obs::Value(intern_v(v) - 2)),
                None if tombstones => Some(Obs::Tombstone),
                None => None,
            };
            let mut iters: BTreeMap<u64, (u64, Key, Key, BTreeMap<Key, u32>, Vec<(Key, Option<Value>)>, bool)> =
                BTreeMap::new();
            let predicate = |step: &mut Step,
                                 seq: u64,
                                 in_range: &dyn Fn(&Key) -> bool,
                                 items: &[(Key, Option<Value>)],
                                 own: &BTreeMap<Key, u32>,
                                 key_ix: &mut BTreeMap<Key, usize>,
                                 intern_v: &mut dyn FnMut(&Value) -> u32| {
                let pins: BTreeMap<&Key, u32> = t
                    .hints
                    .version_sets
                    .get(&(txn.id, seq))
                    .into_iter()
                    .flatten()
                    .map(|(k, w)| (k, w.map_or(INIT, |w| index.get(&w).copied().unwrap_or(NOBODY))))
                    .collect();
                let mut returned = BTreeSet::new();
                for (k, v) in items {
                    returned.insert(k.clone());
                    let Some(obs) = item_obs(v, intern_v) else {
                        step.impossible = true;
                        continue;
                    };
                    let key = kid(k, key_ix);
                    step.reads.push(ReadCheck { key, obs, own: own.get(k).copied(), pin: pins.get(k).copied() });
                }
                let skipped = if tombstones { Obs::Missing } else { Obs::Absent };
                for k in live.iter().filter(|k| in_range(k) && !returned.contains(*k)) {
                    let key = kid(k, key_ix);
                    step.reads.push(ReadCheck {
                        key,
                        obs: skipped,
                        own: own.get(k).copied(),
                        pin: pins.get(k).copied(),
                    });
                }
            };
            for op in txn.body() {
                match &op.kind {
                    OperationKind::Put { key, value } => {
                        own.insert(key.clone(), intern_v(value));
                    }
                    OperationKind::Delete { key } => {
                        own.insert(key.clone(), TOMB);
                    }
                    OperationKind::Get { key, result } => {
                        let obs = match result {
                            Some(v) => Obs::Value(intern_v(v) - 2),
                            None => Obs::Absent,
                        };
                        let k = kid(key, &mut key_ix);
                        step.reads.push(ReadCheck { key: k, obs, own: own.get(key).copied(), pin: None });
                    }
                    OperationKind::Scan { start, end, results } => {
                        let in_range = |k: &Key| start <= k && k < end;
                        predicate(&mut step, op.seq, &in_range, results, &own, &mut key_ix, &mut intern_v);
                    }
                    OperationKind::IterOpen { iter, start, end } => {
                        iters.insert(*iter, (op.seq, start.clone(), end.clone(), own.clone(), Vec::new(), false));
                    }
                    OperationKind::IterNext { iter, result } => {
                        if let Some(p) = iters.get_mut(iter) {
                            match result {
                                IterItem::Exhausted => p.5 = true,
                                IterItem::Item(k, v) => p.4.push((k.clone(), v.clone())),
                            }
                        }
                    }
                    _ => {}
                }
            }
            for (seq, start, end, snap, items, exhausted) in iters.into_values() {
                let last = items.last().map(|(k, _)| k.clone());
                let in_range = |k: &Key| {
                    if exhausted {
                        &start <= k && k < &end
                    } else {
                        last.as_ref().is_some_and(|l| &start <= k && k <= l)
                    }
                };
                predicate(&mut step, seq, &in_range, &items, &snap, &mut key_ix, &mut intern_v);
            }
            for (k, w) in own {
                step.writes.insert(kid(&k, &mut key_ix), w);
            }
            steps.push(step);
        }

        let mut initial = vec![Slot { val: NEVER, writer: INIT }; key_ix.len()];
        for (k, v) in &t.initial {
            initial[key_ix[k]].val = intern_v(v);
        }

        let mut before = Vec::new();
        let mut unsatisfiable = false;
        if t.hints.session_order {
            for members in t.sessions.values() {
                let idx: Vec<usize> = members.iter().filter_map(|id| index.get(id)).map(|i| *i as usize).collect();
                before.extend(idx.windows(2).map(|w| (w[0], w[1])));
            }
        }
        for (k, a, c) in &t.hints.version_order {
            let writer = |id: &TxnId| {
                index.get(id).filter(|i| key_ix.get(k).is_some_and(|kx| steps[**i as usize].writes.contains_key(kx)))
            };
            if let (Some(&a), Some(&c)) = (writer(a), writer(c)) {
                if a == c {
                    unsatisfiable = true;
                }
                before.push((a as usize, c as usize));
            }
        }
        let clocks = (strict && t.hints.real_time).then(|| committed.iter().map(|x| (x.ts_begin, x.ts_commit)).collect());

        Model { ids, steps, initial, before, clocks, policy: t.hints.ryow, unsatisfiable }
    }

    fn read_ok(&self, r: &ReadCheck, store: &[Slot]) -> bool {
        let own_ok = r.own.map(|w| own_matches(w, r.obs));
        match (self.policy, own_ok) {
            (RyowPolicy::MustOwn, Some(ok)) => return ok,
            (RyowPolicy::Either, Some(true)) => return true,
            _ => {}
        }
        let s = store[r.key];
        ext_matches(s.val, r.obs) && r.pin.is_none_or(|p| p == s.writer)
    }

    fn admits(&self, i: usize, store: &[Slot]) -> bool {
        let step = &self.steps[i];
        !step.impossible && step.reads.iter().all(|r| self.read_ok(r, store))
    }

    fn apply(&self, i: usize, store: &mut [Slot]) {
        for (k, w) in &self.steps[i].writes {
            store[*k] = Slot { val: *w, writer: i as u32 };
        }
    }

    /// `preds[i]`: indices that must precede `i`, as a bit set.
    fn pred_masks(&self) -> Vec<u32> {
        let n = self.ids.len();
        let mut preds = vec![0u32; n];
        for &(a, b) in &self.before {
            preds[b] |= 1 << a;
        }
        if let Some(clocks) = &self.clocks {
            for (i, (_, ci)) in clocks.iter().enumerate() {
                for (j, (bj, _)) in clocks.iter().enumerate() {
                    if let (Some(ci), Some(bj)) = (ci, bj) {
                        if i != j && ci < bj {
                            preds[j] |= 1 << i;
                        }
                    }
                }
            }
        }
        preds
    }
}

struct Search<'m> {
    m: &'m Model,
    preds: Vec<u32>,
    full: u32,
}

impl Search<'_> {
    fn dfs(&self, mask: u32, store: &mut Vec<Slot>, order: &mut Vec<usize>, failed: &mut HashSet<(u32, Vec<Slot>)>) -> bool {
        if mask == self.full {
            return true;
        }
        if failed.contains(&(mask, store.clone())) {
            return false;
        }
        for i in 0..self.m.ids.len() {
            let bit = 1u32 << i;
            if mask & bit != 0 || self.preds[i] & !mask != 0 || !self.m.admits(i, store) {
                continue;
            }
            let saved = store.clone();
            self.m.apply(i, store);
            order.push(i);
            if self.dfs(mask | bit, store, order, failed) {
                return true;
            }
            order.pop();
            *store = saved;
        }
        failed.insert((mask, store.clone()));
        false
    }
}

/// Decides serializability of the committed part of `t` by exhaustive
/// search. Session order and version-order hints constrain the order; with
/// `strict`, so does real time.
pub fn serializability_oracle(t: &Trace, strict: bool) -> Result<OracleVerdict, HarnessError> {
    let n = t.committed_count();
    if n > ORACLE_MAX_TXNS {
        return Err(HarnessError::TooLarge(n));
    }
    let m = Model::build(t, strict);
    if m.unsatisfiable {
        return Ok(OracleVerdict::Reject);
    }
    if n == 0 {
        return Ok(OracleVerdict::Accept(Vec::new()));
    }
    let s = Search { preds: m.pred_masks(), full: (1u32 << n) - 1, m: &m };
    let firsts: Vec<usize> = (0..n).filter(|i| s.preds[*i] == 0).collect();
    let found = par::find_map_first(&firsts, |&i| {
        let mut store = m.initial.clone();
        if !m.admits(i, &store) {
            return None;
        }
        m.apply(i, &mut store);
        let mut order = vec![i];
        s.dfs(1 << i, &mut store, &mut order, &mut HashSet::new()).then_some(order)
    });
    Ok(match found {
        Some(order) => OracleVerdict::Accept(order.into_iter().map(|i| m.ids[i]).collect()),
        None => OracleVerdict::Reject,
    })
}

/// Replays the committed transactions of `t` in `order`, checking every
/// observation and every order hint. With `strict`, real time counts too.
pub fn replay(t: &Trace, order: &[TxnId], strict: bool) -> Result<(), ReplayError> {
    let m = Model::build(t, strict);
    let index: HashMap<TxnId, usize> = m.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut pos = vec![usize::MAX; m.ids.len()];
    for (p, id) in order.iter().enumerate() {
        match index.get(id) {
            Some(&i) if pos[i] == usize::MAX => pos[i] = p,
            _ => return Err(ReplayError::NotAPermutation),
        }
    }
    if order.len() != m.ids.len() {
        return Err(ReplayError::NotAPermutation);
    }
    for &(a, b) in &m.before {
        if pos[a] >= pos[b] {
            return Err(ReplayError::OrderViolation { before: m.ids[a], after: m.ids[b] });
        }
    }
    if let Some(clocks) = &m.clocks {
        // No later transaction may have committed before an earlier one began.
        let mut min_commit: Option<(u64, usize)> = None;
        for id in order.iter().rev() {
            let i = index[id];
            let (begin, commit) = clocks[i];
            if let (Some(b), Some((c, j))) = (begin, min_commit) {
                if c < b {
                    return Err(ReplayError::OrderViolation { before: m.ids[j], after: *id });
                }
            }
            if let Some(c) = commit {
                if min_commit.is_none_or(|(mc, _)| c < mc) {
                    min_commit = Some((c, i));
                }
            }
        }
    }
    let mut store = m.initial.clone();
    for id in order {
        let i = index[id];
        if !m.admits(i, &store) {
            return Err(ReplayError::ReadMismatch { txn: *id });
        }
        m.apply(i, &mut store);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn verdict(t: &Trace) -> bool {
        serializability_oracle(t, false).unwrap().is_accept()
    }

    #[test]
    fn tau0_has_one_order() {
        assert_eq!(serializability_oracle(&fixtures::tau0(), false).unwrap(), OracleVerdict::Accept(vec![1, 2, 3]));
    }

    #[test]
    fn classic_anomalies_are_rejected() {
        for t in [fixtures::lost_update(), fixtures::g1c(), fixtures::write_skew(), fixtures::read_skew()] {
            assert!(!verdict(&t));
        }
    }

    #[test]
    fn time_inversion_needs_strict() {
        let t = fixtures::time_inversion();
        assert!(verdict(&t));
        assert_eq!(serializability_oracle(&t, true).unwrap(), OracleVerdict::Reject);
    }

    #[test]
    fn too_many_transactions() {
        let mut b = fixtures::TraceBuilder::new();
        for i in 0..11 {
            b = b.txn(i, i, vec![]);
        }
        assert_eq!(serializability_oracle(&b.build(), false), Err(HarnessError::TooLarge(11)));
    }

    #[test]
    fn replay_reports_mismatches() {
        let t = fixtures::tau0();
        assert_eq!(replay(&t, &[1, 2, 3], false), Ok(()));
        assert_eq!(replay(&t, &[2, 1, 3], false), Err(ReplayError::ReadMismatch { txn: 2 }));
        assert_eq!(replay(&t, &[1, 2], false), Err(ReplayError::NotAPermutation));
        assert_eq!(replay(&t, &[1, 1, 2], false), Err(ReplayError::NotAPermutation));
    }

    #[test]
    fn replay_checks_real_time() {
        let t = fixtures::time_inversion();
        let OracleVerdict::Accept(order) = serializability_oracle(&t, false).unwrap() else { panic!() };
        assert_eq!(replay(&t, &order, false), Ok(()));
        assert!(matches!(replay(&t, &order, true), Err(ReplayError::OrderViolation { .. })));
    }
}
