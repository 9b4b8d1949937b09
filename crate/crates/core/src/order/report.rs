//! Failure and per-process summaries of an ordered trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::OrderedTrace;
use crate::clock::ProcessId;
use crate::trace::EventType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub seq: u64,
    pub event_type: EventType,
    pub failure_reason: String,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessFailures {
    pub pid: ProcessId,
    pub entries: Vec<FailureEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub failures: Vec<ProcessFailures>,
    /// Number of failures per reason.
    pub totals: BTreeMap<String, usize>,
    pub total: usize,
}

impl FailureReport {
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn for_process(&self, pid: ProcessId) -> Option<&ProcessFailures> {
        self.failures.iter().find(|f| f.pid == pid)
    }
}

/// Broken records grouped by the process that sent or lost them, in order.
pub fn failure_report(ot: &OrderedTrace) -> FailureReport {
    let mut groups: BTreeMap<ProcessId, Vec<FailureEntry>> = BTreeMap::new();
    let mut report = FailureReport::default();
    for (position, r) in ot.records().iter().enumerate().filter(|(_, r)| r.broken) {
        let reason = r.failure_reason.clone().unwrap_or_default();
        *report.totals.entry(reason.clone()).or_default() += 1;
        report.total += 1;
        groups.entry(r.from_node).or_default().push(FailureEntry {
            seq: r.seq,
            event_type: r.event_type,
            failure_reason: reason,
            position,
        });
    }
    report.failures = groups.into_iter().map(|(pid, entries)| ProcessFailures { pid, entries }).collect();
    report
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSummary {
    pub pid: ProcessId,
    pub records: usize,
    pub sends: usize,
    pub receives: usize,
    pub locals: usize,
    pub broken: usize,
    pub first_position: usize,
    pub last_position: usize,
    pub crashed: bool,
    pub crash_position: Option<usize>,
}

/// One row per process seen in the trace, by pid.
pub fn process_summary(ot: &OrderedTrace) -> Vec<ProcessSummary> {
    let mut rows: BTreeMap<ProcessId, ProcessSummary> = BTreeMap::new();
    for (position, r) in ot.records().iter().enumerate() {
        let pids: &[ProcessId] = if r.is_message() { &[r.from_node, r.to_node] } else { &[r.from_node] };
        for &pid in pids {
            let row = rows
                .entry(pid)
                .or_insert_with(|| ProcessSummary { pid, first_position: position, ..Default::default() });
            row.records += 1;
            row.last_position = position;
            match r.event_type {
                EventType::SendRecv if pid == r.from_node => row.sends += 1,
                EventType::SendRecv => row.receives += 1,
                EventType::Local | EventType::Poll => row.locals += 1,
                EventType::Crash => {
                    if !row.crashed {
                        row.crashed = true;
                        row.crash_position = Some(position);
                    }
                }
            }
            if r.broken && pid == r.from_node {
                row.broken += 1;
            }
        }
    }
    rows.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{order_traces, OrderMode};
    use super::*;
    use crate::trace::TraceRecord;

    #[test]
    fn no_failures_no_report() {
        let ot = order_traces(&inversion(), OrderMode::Causal).unwrap();
        let report = failure_report(&ot);
        assert!(report.is_empty());
        assert_eq!(serde_json::to_value(&report).unwrap(), serde_json::json!({"failures": [], "totals": {}, "total": 0}));
    }

    #[test]
    fn crash_record_is_reported_under_its_process() {
        let mut v = inversion();
        v.push(
            TraceRecord::local(3, &clock(4, 7, &[], &[(4, 2)]))
                .with_event_type(EventType::Crash)
                .with_failure("missed 3 polls"),
        );
        v[1] = v[1].clone().with_failure("ack timeout");
        let ot = order_traces(&v, OrderMode::Causal).unwrap();
        let report = failure_report(&ot);
        assert_eq!(report.total, 2);
        let p4 = report.for_process(4).unwrap();
        assert_eq!(p4.entries[0].failure_reason, "missed 3 polls");
        assert_eq!(p4.entries[0].event_type, EventType::Crash);
        assert_eq!(report.for_process(1).unwrap().entries[0].seq, 2);
        assert_eq!(report.totals["ack timeout"], 1);

        let summary = process_summary(&ot);
        assert_eq!(summary.iter().map(|s| s.pid).collect::<Vec<_>>(), vec![0, 1, 2, 4]);
        let p1 = &summary[1];
        assert_eq!((p1.sends, p1.receives, p1.broken), (1, 1, 1));
        assert!(summary[3].crashed);
    }
}
