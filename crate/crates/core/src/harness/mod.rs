// SPDX-License-Identifier: Apache-2.0

//! Workload generation, anomaly injection and a brute-force reference
//! checker for small traces.

mod anomaly;
mod generate;
mod oracle;
mod random;

pub use anomaly::{inject_anomaly, AnomalyKind, AnomalySpec};
pub use generate::generate_valid_trace;
pub use oracle::{replay, serializability_oracle, OracleVerdict, ReplayError, ORACLE_MAX_TXNS};
pub use random::{random_small_trace, RandomTraceConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("invalid workload profile: {0}")]
    InvalidProfile(String),
    #[error("anomaly count must be at least 1")]
    ZeroAnomalies,
    #[error("no fresh keys left for anomaly injection")]
    KeyspaceExhausted,
    #[error("trace has {0} committed transactions; the oracle handles at most {ORACLE_MAX_TXNS}")]
    TooLarge(usize),
}

/// Relative weights of the operation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpMix {
    pub read: u32,
    pub write: u32,
    pub delete: u32,
    pub scan: u32,
    pub iterator: u32,
    pub read_modify_write: u32,
}

impl OpMix {
    fn total(&self) -> u32 {
        self.read + self.write + self.delete + self.scan + self.iterator + self.read_modify_write
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ValueSpace {
    Unique,
    /// Values drawn from this many distinct strings.
    DuplicateHeavy(u32),
}

fn default_sessions() -> u32 {
    24
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkloadProfile {
    pub name: String,
    pub num_txns: usize,
    pub num_keys: usize,
    pub ops_per_txn: usize,
    pub op_mix: OpMix,
    pub value_space: ValueSpace,
    pub scan_span_max: usize,
    pub iter_k_max: usize,
    pub seed: u64,
    #[serde(default = "default_sessions")]
    pub sessions: u32,
}

impl WorkloadProfile {
    /// Half reads, half blind writes.
    pub fn blindw(num_txns: usize) -> Self {
        WorkloadProfile {
            name: "blindw".into(),
            num_txns,
            num_keys: 10_000,
            ops_per_txn: 8,
            op_mix: OpMix { read: 50, write: 50, delete: 0, scan: 0, iterator: 0, read_modify_write: 0 },
            value_space: ValueSpace::Unique,
            scan_span_max: 0,
            iter_k_max: 0,
            seed: 0,
            sessions: default_sessions(),
        }
    }

    /// Every operation kind, including predicates and read-modify-write.
    pub fn randombench(num_txns: usize) -> Self {
        WorkloadProfile {
            name: "randombench".into(),
            num_txns,
            num_keys: 1_000,
            ops_per_txn: 8,
            op_mix: OpMix { read: 25, write: 25, delete: 5, scan: 10, iterator: 10, read_modify_write: 25 },
            value_space: ValueSpace::Unique,
            scan_span_max: 8,
            iter_k_max: 4,
            seed: 0,
            sessions: default_sessions(),
        }
    }

    pub fn by_name(name: &str, num_txns: usize) -> Option<Self> {
        match name {
            "blindw" => Some(Self::blindw(num_txns)),
            "randombench" => Some(Self::randombench(num_txns)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidProfile(m.into()));
        if self.num_keys == 0 {
            return bad("numKeys must be positive");
        }
        if self.sessions == 0 {
            return bad("sessions must be positive");
        }
        if self.op_mix.total() == 0 && self.ops_per_txn > 0 {
            return bad("opMix weights are all zero");
        }
        if self.op_mix.scan > 0 && self.scan_span_max == 0 {
            return bad("scans need scanSpanMax > 0");
        }
        if self.op_mix.iterator > 0 && (self.scan_span_max == 0 || self.iter_k_max == 0) {
            return bad("iterators need scanSpanMax > 0 and iterKMax > 0");
        }
        if self.value_space == ValueSpace::DuplicateHeavy(0) {
            return bad("duplicateHeavy needs at least one value");
        }
        Ok(())
    }
}
