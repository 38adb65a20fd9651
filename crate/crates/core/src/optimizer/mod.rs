// SPDX-License-Identifier: Apache-2.0

//! Verdict-preserving IR transformations run before solving.

pub mod prio;
pub mod prune;
pub mod reach;
pub mod unsat;

pub use prio::{prioritize, CycleInKnown, PriorityOrder};
pub use prune::{reachability_prune, EarlyReject, PruneStats};
pub use reach::Reachability;
pub use unsat::{plan_segments, unsat_search, SegmentationPlan, UnsatOutcome};
