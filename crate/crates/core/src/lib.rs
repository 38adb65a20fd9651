// SPDX-License-Identifier: Apache-2.0

//! Sound and complete checking of transactional key-value traces against
//! isolation levels.
//!
//! The pipeline parses a trace, builds its abstract semantic graph, lowers
//! it to an IR of known edges, superpositions and implications, prunes the
//! IR, and decides acyclicity with a DPLL search over edge variables.

pub mod analysis;
pub mod asg;
pub mod check;
pub mod fixtures;
pub mod graph;
pub mod harness;
pub mod ir;
pub mod isolation;
pub mod optimizer;
pub mod par;
pub mod report;
pub mod solver;
pub mod trace;
