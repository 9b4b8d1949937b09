//! Checks a trace's clocks against the event graph of the run that wrote it.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::clock::{CausalRelation, ClockError, HybridVectorClock};
use crate::sim::{DagError, EventDag, EventKind};
use crate::trace::TraceRecord;

const MAX_EXAMPLES: usize = 20;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Clock(#[from] ClockError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    /// A path exists but the clocks do not compare Before.
    Soundness,
    /// No path either way but the clocks are ordered.
    Completeness,
    /// The event's record is absent or belongs to another process.
    MissingRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub event: usize,
    pub other: Option<usize>,
    pub seq: u64,
    pub other_seq: Option<u64>,
    pub relation: Option<CausalRelation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub events: usize,
    pub reachable_pairs: usize,
    pub unrelated_pairs: usize,
    pub soundness_violations: usize,
    pub completeness_violations: usize,
    pub missing_records: usize,
    pub exhaustive: bool,
    /// The first few issues found.
    pub examples: Vec<Issue>,
}

impl CheckReport {
    pub fn violations(&self) -> usize {
        self.soundness_violations + self.completeness_violations + self.missing_records
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    fn note(&mut self, issue: Issue) {
        match issue.kind {
            IssueKind::Soundness => self.soundness_violations += 1,
            IssueKind::Completeness => self.completeness_violations += 1,
            IssueKind::MissingRecord => self.missing_records += 1,
        }
        if self.examples.len() < MAX_EXAMPLES {
            self.examples.push(issue);
        }
    }
}

fn event_clock(kind: EventKind, pid: u32, record: &TraceRecord) -> Option<HybridVectorClock> {
    match kind {
        EventKind::Send if record.from_node == pid => Some(record.sender_clock()),
        EventKind::Receive if record.to_node == pid && record.is_message() => Some(record.output_clock()),
        EventKind::Local if record.from_node == pid => Some(record.output_clock()),
        _ => None,
    }
}

/// Compares every pair of events. Each reachable pair must compare Before.
/// With `exhaustive`, each pair unreachable in both directions must also be
/// unordered, which holds only when epsilon exceeds the run's epoch span.
pub fn check_run(records: &[TraceRecord], dag: &EventDag, exhaustive: bool) -> Result<CheckReport, VerifyError> {
    let by_seq: HashMap<u64, &TraceRecord> = records.iter().map(|r| (r.seq, r)).collect();
    let mut report = CheckReport { events: dag.len(), exhaustive, ..Default::default() };

    let mut clocks: Vec<Option<HybridVectorClock>> = Vec::with_capacity(dag.len());
    for e in dag.events() {
        let clock = by_seq
            .get(&e.record_seq)
            .filter(|r| r.validate().is_ok())
            .and_then(|r| event_clock(e.kind, e.pid, r));
        if clock.is_none() {
            report.note(Issue {
                kind: IssueKind::MissingRecord,
                event: e.id,
                other: None,
                seq: e.record_seq,
                other_seq: None,
                relation: None,
            });
        }
        clocks.push(clock);
    }

    let closure = dag.closure()?;
    let events = dag.events();
    for a in 0..events.len() {
        for b in 0..events.len() {
            if a == b {
                continue;
            }
            let forward = closure.reaches(a, b);
            let unrelated = !forward && !closure.reaches(b, a);
            if forward {
                report.reachable_pairs += 1;
            } else if unrelated && a < b {
                report.unrelated_pairs += 1;
            }
            let (Some(ca), Some(cb)) = (&clocks[a], &clocks[b]) else { continue };
            let kind = if forward {
                let rel = ca.compare(cb)?;
                (rel != CausalRelation::Before).then_some((IssueKind::Soundness, rel))
            } else if exhaustive && unrelated && a < b {
                let rel = ca.compare(cb)?;
                matches!(rel, CausalRelation::Before | CausalRelation::After).then_some((IssueKind::Completeness, rel))
            } else {
                None
            };
            if let Some((kind, rel)) = kind {
                report.note(Issue {
                    kind,
                    event: a,
                    other: Some(b),
                    seq: events[a].record_seq,
                    other_seq: Some(events[b].record_seq),
                    relation: Some(rel),
                });
            }
        }
    }
    Ok(report)
}
