//! Ordering of trace records and the views built on top of an order.
//!
//! Two orders are available. [`OrderMode::Alg3`] sorts by the sender's
//! `(max_epoch, own counter)` key and can place a record before one it
//! causally depends on. [`OrderMode::Causal`] is a topological order of the
//! output clocks and never does.

mod report;
mod swimlane;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{CausalRelation, ClockError, HybridVectorClock};
use crate::trace::TraceRecord;

pub use report::{failure_report, process_summary, FailureEntry, FailureReport, ProcessFailures, ProcessSummary};
pub use swimlane::{
    build_swimlane, isolate, Arrow, CrashMarker, Endpoint, Lane, Node, NodeKey, SwimlaneModel, TimeMode, XPos,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SortKey {
    pub epoch: u64,
    pub counter: u64,
}

/// Key of the sending side: the sender's epoch and its own counter.
pub fn send_key(r: &TraceRecord) -> SortKey {
    SortKey { epoch: r.sender_max_epoch, counter: r.sender_counters.get(&r.from_node).copied().unwrap_or(0) }
}

/// Key of the receiving side: the output epoch and the receiver's own counter.
pub fn output_key(r: &TraceRecord) -> SortKey {
    SortKey { epoch: r.output_max_epoch, counter: r.output_counters.get(&r.to_node).copied().unwrap_or(0) }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    #[default]
    Causal,
    Alg3,
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMode::Causal => "causal",
            OrderMode::Alg3 => "alg3",
        })
    }
}

impl FromStr for OrderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "causal" => Ok(OrderMode::Causal),
            "alg3" => Ok(OrderMode::Alg3),
            other => Err(format!("unknown order mode `{other}` (expected causal or alg3)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("clock cycle between records {a} and {b}")]
    Cycle { a: u64, b: u64 },
    #[error("no record with seq {0}")]
    NotFound(u64),
    #[error("duplicate record seq {0}")]
    DuplicateSeq(u64),
    #[error(transparent)]
    Clock(#[from] ClockError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedTrace {
    mode: OrderMode,
    records: Vec<TraceRecord>,
    positions: HashMap<u64, usize>,
}

impl OrderedTrace {
    pub fn mode(&self) -> OrderMode {
        self.mode
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, seq: u64) -> Option<usize> {
        self.positions.get(&seq).copied()
    }

    pub fn get(&self, seq: u64) -> Option<&TraceRecord> {
        self.position(seq).map(|p| &self.records[p])
    }

    pub fn seqs(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.seq)
    }

    fn output_clocks(&self) -> Vec<HybridVectorClock> {
        self.records.iter().map(TraceRecord::output_clock).collect()
    }
}

pub fn order_traces(records: &[TraceRecord], mode: OrderMode) -> Result<OrderedTrace, OrderError> {
    let mut positions = HashMap::with_capacity(records.len());
    for r in records {
        if positions.insert(r.seq, 0).is_some() {
            return Err(OrderError::DuplicateSeq(r.seq));
        }
    }
    let ordered = match mode {
        OrderMode::Alg3 => {
            let mut v = records.to_vec();
            v.sort_by_key(|r| (send_key(r), output_key(r), r.from_node, r.to_node, r.seq));
            v
        }
        OrderMode::Causal => causal_order(records)?,
    };
    for (i, r) in ordered.iter().enumerate() {
        positions.insert(r.seq, i);
    }
    Ok(OrderedTrace { mode, records: ordered, positions })
}

fn causal_order(records: &[TraceRecord]) -> Result<Vec<TraceRecord>, OrderError> {
    let n = records.len();
    let clocks: Vec<HybridVectorClock> = records.iter().map(TraceRecord::output_clock).collect();
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            match clocks[i].compare(&clocks[j])? {
                CausalRelation::Before => {
                    successors[i].push(j);
                    indegree[j] += 1;
                }
                CausalRelation::After => {
                    successors[j].push(i);
                    indegree[i] += 1;
                }
                CausalRelation::Equal | CausalRelation::Concurrent => {}
            }
        }
    }

    // Ready records leave in seq order, so appending to a log never moves
    // earlier records unless the new record must precede them.
    let mut ready: BinaryHeap<Reverse<(u64, usize)>> =
        (0..n).filter(|&i| indegree[i] == 0).map(|i| Reverse((records[i].seq, i))).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(Reverse((_, i))) = ready.pop() {
        out.push(records[i].clone());
        for &s in &successors[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse((records[s].seq, s)));
            }
        }
    }
    if out.len() < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).expect("a record is left over");
        let pred = (0..n).find(|&p| indegree[p] > 0 && successors[p].contains(&stuck)).unwrap_or(stuck);
        return Err(OrderError::Cycle { a: records[pred].seq, b: records[stuck].seq });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub earlier: u64,
    pub later: u64,
    pub explanation: String,
}

/// Pairs placed in the order against what their output clocks say.
pub fn detect_violations(ot: &OrderedTrace) -> Result<Vec<Violation>, OrderError> {
    let clocks = ot.output_clocks();
    let records = ot.records();
    let mut out = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if clocks[j].compare(&clocks[i])? == CausalRelation::Before {
                out.push(Violation {
                    earlier: records[i].seq,
                    later: records[j].seq,
                    explanation: format!(
                        "record {} happens before record {} but is placed after it (positions {j} and {i})",
                        records[j].seq, records[i].seq
                    ),
                });
            }
        }
    }
    Ok(out)
}
