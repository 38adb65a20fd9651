// SPDX-License-Identifier: Apache-2.0

use isochk::check::{check, CheckOptions, Verdict};
use isochk::fixtures;
use isochk::harness::{
    generate_valid_trace, inject_anomaly, random_small_trace, replay, AnomalyKind, AnomalySpec, RandomTraceConfig,
    ValueSpace, WorkloadProfile,
};
use isochk::isolation::IsolationLevel::{self, *};
use isochk::trace::{parse_trace_str, serialize_trace_string, Trace};
use proptest::prelude::*;

fn accepts(t: &Trace, level: IsolationLevel) -> bool {
    match check(t, level, &CheckOptions::default()).unwrap().verdict {
        Verdict::Accept { .. } => true,
        Verdict::Reject(_) => false,
        Verdict::BudgetExceeded => panic!("budget"),
    }
}

/// Accept(SSER) => Accept(SER) => Accept(RR) => Accept(RC), Accept(SI) => Accept(RC).
fn monotone(t: &Trace) -> Result<(), String> {
    let a: Vec<bool> = IsolationLevel::ALL.iter().map(|l| accepts(t, *l)).collect();
    let at = |l: IsolationLevel| a[IsolationLevel::ALL.iter().position(|x| *x == l).unwrap()];
    for (strong, weak) in [(Sser, Ser), (Ser, Rr), (Rr, Rc), (Si, Rc)] {
        if at(strong) && !at(weak) {
            return Err(format!("accepts {strong} but rejects {weak}"));
        }
    }
    Ok(())
}

fn small_profile(base: WorkloadProfile, txns: usize, keys: usize, seed: u64, dup: Option<u32>) -> WorkloadProfile {
    let mut p = base;
    p.num_txns = txns;
    p.num_keys = keys;
    p.seed = seed;
    p.sessions = 4;
    if let Some(c) = dup {
        p.value_space = ValueSpace::DuplicateHeavy(c);
    }
    p
}

#[test]
fn hierarchy_is_monotone_on_the_corpus() {
    for (name, t) in fixtures::corpus() {
        if IsolationLevel::ALL.iter().any(|l| check(&t, *l, &CheckOptions::default()).is_err()) {
            continue;
        }
        monotone(&t).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_round_trips(seed in any::<u64>()) {
        let t = random_small_trace(seed, RandomTraceConfig::default());
        let text = serialize_trace_string(&t);
        prop_assert_eq!(parse_trace_str(&text).unwrap(), t);
    }

    #[test]
    fn hierarchy_is_monotone_on_random_traces(seed in any::<u64>()) {
        let t = random_small_trace(seed, RandomTraceConfig::default());
        prop_assert!(monotone(&t).is_ok(), "{:?}\n{}", monotone(&t), serialize_trace_string(&t));
    }

    #[test]
    fn ablations_agree(seed in any::<u64>()) {
        let t = random_small_trace(seed, RandomTraceConfig { max_txns: 8, ..Default::default() });
        for level in IsolationLevel::ALL {
            let base = check(&t, level, &CheckOptions::default()).unwrap().verdict.is_accept();
            for (prune, prio, learning) in [(false, false, false), (true, false, true), (false, true, false)] {
                let opts = CheckOptions { prune, prio, learning, ..Default::default() };
                let v = check(&t, level, &opts).unwrap().verdict.is_accept();
                prop_assert_eq!(v, base, "{:?} prune={} prio={} learning={}", level, prune, prio, learning);
            }
        }
    }

    #[test]
    fn unsat_search_never_changes_the_verdict(seed in any::<u64>(), k in 2usize..5) {
        let t = random_small_trace(seed, RandomTraceConfig::default());
        for level in [Ser, Si, Rc] {
            let full = check(&t, level, &CheckOptions::default()).unwrap().verdict.is_accept();
            let opts = CheckOptions { unsat_search: true, segments: k, seed, ..Default::default() };
            prop_assert_eq!(check(&t, level, &opts).unwrap().verdict.is_accept(), full);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_traces_are_accepted_everywhere(
        seed in any::<u64>(),
        randombench in any::<bool>(),
        dup in prop::option::of(2u32..5),
    ) {
        let base = if randombench { WorkloadProfile::randombench(0) } else { WorkloadProfile::blindw(0) };
        let t = generate_valid_trace(&small_profile(base, 60, 25, seed, dup)).unwrap();
        for level in IsolationLevel::ALL {
            let r = check(&t, level, &CheckOptions::default()).unwrap();
            let Verdict::Accept { witness } = &r.verdict else {
                return Err(TestCaseError::fail(format!("{level:?} rejected a generated trace")));
            };
            if matches!(level, Sser | Ser) {
                prop_assert_eq!(replay(&t, witness, level == Sser), Ok(()));
            }
        }
    }

    #[test]
    fn injected_anomalies_are_rejected_under_ser(
        seed in any::<u64>(),
        kind in prop::sample::select(AnomalyKind::ALL.to_vec()),
        count in 1usize..3,
    ) {
        let t = generate_valid_trace(&small_profile(WorkloadProfile::randombench(0), 40, 20, seed, None)).unwrap();
        let t = inject_anomaly(&t, AnomalySpec { kind, count }).unwrap();
        let level = if kind == AnomalyKind::TimeInversion { Sser } else { Ser };
        prop_assert!(!accepts(&t, level));
        if kind == AnomalyKind::TimeInversion {
            prop_assert!(accepts(&t, Ser));
        }
    }
}
