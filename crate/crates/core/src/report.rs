// SPDX-License-Identifier: Apache-2.0

//! JSON rendering of check results.

use serde_json::{json, Value as Json};

use crate::check::{CheckReport, CheckStats, Verdict};

fn stats_json(s: &CheckStats) -> Json {
    json!({
        "txns": s.txns,
        "vars": s.vars,
        "known": s.known,
        "superpositions": s.superpositions,
        "implications": s.implications,
        "pruned": s.prune.pruned,
        "promoted": s.prune.promoted,
        "fired": s.prune.fired,
        "prune_rounds": s.prune.rounds,
        "early_reject": s.early_reject,
        "decisions": s.solve.decisions,
        "conflicts": s.solve.conflicts,
        "propagations": s.solve.propagations,
        "learned": s.solve.learned,
        "segment": s.segment,
        "segments_checked": s.segments_checked,
        "asg_ms": s.asg_ms,
        "ir_ms": s.ir_ms,
        "optimize_ms": s.optimize_ms,
        "solve_ms": s.solve_ms,
        "total_ms": s.total_ms,
    })
}

pub fn verdict_json(r: &CheckReport) -> Json {
    let (witness, counterexample) = match &r.verdict {
        Verdict::Accept { witness } => (json!(witness), Json::Null),
        Verdict::Reject(cx) => {
            let cycle: Vec<Json> = cx
                .cycle
                .iter()
                .map(|e| {
                    let mut o = json!({
                        "src": e.src.to_string(),
                        "dst": e.dst.to_string(),
                        "type": e.kind.as_str(),
                        "source": e.source,
                    });
                    if let Some(k) = &e.key {
                        o["key"] = json!(String::from_utf8_lossy(&k.0));
                    }
                    o
                })
                .collect();
            (Json::Null, json!({"cycle": cycle, "reason": cx.reason.as_str(), "detail": cx.detail}))
        }
        Verdict::BudgetExceeded => (Json::Null, Json::Null),
    };
    json!({
        "verdict": r.verdict.as_str(),
        "witness": witness,
        "counterexample": counterexample,
        "stats": stats_json(&r.stats),
    })
}
