// SPDX-License-Identifier: Apache-2.0

//! Unsat search: check contiguous commit-order windows of a trace on their
//! own. A rejecting window rejects the whole trace; accepting windows say
//! nothing about it.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::{Trace, TxnId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationPlan {
    pub k: usize,
    pub seed: u64,
    /// Disjoint segments covering the committed transactions, in the order
    /// they are checked.
    pub segments: Vec<BTreeSet<TxnId>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnsatOutcome<R> {
    Reject { segment: usize, report: R },
    Inconclusive,
}

/// Committed transactions by commit position, and for each cut after
/// position `i` the number of transactions that span it.
fn commit_order(t: &Trace) -> (Vec<TxnId>, Vec<usize>) {
    let mut txns: Vec<(u64, u64, TxnId)> = t
        .committed()
        .map(|x| {
            let (b, c) = x.interval();
            (c, b, x.id)
        })
        .collect();
    txns.sort_unstable();
    let mut begins: Vec<u64> = txns.iter().map(|x| x.1).collect();
    begins.sort_unstable();
    let crossing = txns
        .iter()
        .enumerate()
        .map(|(i, &(c, _, _))| begins.partition_point(|b| *b <= c).saturating_sub(i + 1))
        .collect();
    (txns.into_iter().map(|x| x.2).collect(), crossing)
}

/// Splits the committed transactions into up to `k` contiguous commit-order
/// windows. Cut points are drawn at random and then moved within a small
/// window to where the fewest transactions are in flight. Segments with the
/// most concurrency are checked first.
pub fn plan_segments(t: &Trace, k: usize, seed: u64) -> SegmentationPlan {
    let (order, crossing) = commit_order(t);
    let n = order.len();
    let k = k.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts: Vec<usize> = Vec::new();
    if n >= 2 {
        let reach = n / (4 * k);
        for _ in 1..k.min(n) {
            let c = rng.random_range(0..n - 1);
            let lo = c.saturating_sub(reach);
            let hi = (c + reach).min(n - 2);
            let best = (lo..=hi).min_by_key(|i| (crossing[*i], i.abs_diff(c))).expect("non-empty window");
            cuts.push(best);
        }
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut bounds = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        bounds.push((start, c + 1));
        start = c + 1;
    }
    bounds.push((start, n));
    let load = |&(a, b): &(usize, usize)| if b > a + 1 { crossing[a..b - 1].iter().copied().max().unwrap_or(0) } else { 0 };
    let mut ranked: Vec<(usize, usize, (usize, usize))> =
        bounds.iter().enumerate().map(|(i, r)| (load(r), i, *r)).collect();
    ranked.sort_by_key(|(l, i, _)| (std::cmp::Reverse(*l), *i));
    let segments = ranked.into_iter().map(|(_, _, (a, b))| order[a..b].iter().copied().collect()).collect();
    SegmentationPlan { k, seed, segments }
}

/// Runs `check` on each segment in plan order until one returns a rejection
/// report. Stops early when `stop` is raised.
pub fn unsat_search<R>(
    plan: &SegmentationPlan,
    mut check: impl FnMut(&BTreeSet<TxnId>) -> Option<R>,
    stop: &AtomicBool,
) -> UnsatOutcome<R> {
    for (i, seg) in plan.segments.iter().enumerate() {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        if let Some(report) = check(seg) {
            return UnsatOutcome::Reject { segment: i, report };
        }
    }
    UnsatOutcome::Inconclusive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{get, put, TraceBuilder};

    fn serial(n: u64) -> Trace {
        let mut b = TraceBuilder::new();
        for i in 1..=n {
            b = b.txn(i, i, vec![put("x", &i.to_string())]);
        }
        b.build()
    }

    #[test]
    fn partitions_committed_set() {
        let t = serial(50);
        for seed in 0..20 {
            let plan = plan_segments(&t, 3, seed);
            assert!(plan.segments.len() <= 3 && !plan.segments.is_empty());
            let all: Vec<TxnId> = plan.segments.iter().flatten().copied().collect();
            let set: BTreeSet<TxnId> = all.iter().copied().collect();
            assert_eq!(all.len(), 50);
            assert_eq!(set, (1..=50).collect());
        }
    }

    #[test]
    fn single_segment_is_everything() {
        let plan = plan_segments(&serial(7), 1, 3);
        assert_eq!(plan.segments, vec![(1..=7).collect()]);
    }

    #[test]
    fn deterministic_in_seed() {
        let t = serial(40);
        assert_eq!(plan_segments(&t, 3, 9), plan_segments(&t, 3, 9));
    }

    #[test]
    fn cuts_avoid_overlapping_pair() {
        // Transactions 10 and 11 overlap; a cut between them is never chosen
        // when a quiet point lies in reach.
        let mut b = TraceBuilder::new();
        for i in 1..=9 {
            b = b.txn(i, i, vec![put("x", &i.to_string())]);
        }
        b = b.concurrent(vec![(10, 10, vec![get("y", None), put("y", "a")]), (11, 11, vec![get("y", None), put("y", "b")])]);
        for i in 12..=20 {
            b = b.txn(i, i, vec![put("x", &i.to_string())]);
        }
        let t = b.build();
        for seed in 0..50 {
            let plan = plan_segments(&t, 3, seed);
            assert!(plan.segments.iter().any(|s| s.contains(&10) && s.contains(&11)), "seed {seed}");
            // The segment holding the concurrent pair goes first.
            assert!(plan.segments[0].contains(&10));
        }
    }

    #[test]
    fn search_stops_at_first_reject() {
        let plan = plan_segments(&serial(30), 3, 1);
        let mut calls = 0;
        let out = unsat_search(
            &plan,
            |s| {
                calls += 1;
                s.contains(&1).then_some("core")
            },
            &AtomicBool::new(false),
        );
        match out {
            UnsatOutcome::Reject { segment, report } => {
                assert_eq!(report, "core");
                assert_eq!(calls, segment + 1);
            }
            UnsatOutcome::Inconclusive => panic!("expected reject"),
        }
        assert_eq!(unsat_search(&plan, |_| None::<()>, &AtomicBool::new(false)), UnsatOutcome::Inconclusive);
    }
}
