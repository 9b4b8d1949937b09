//! Ground-truth happens-before graph recorded by the simulator.

use std::collections::VecDeque;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ProcessId;

pub type EventId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Local,
    Send,
    Receive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagEvent {
    pub id: EventId,
    pub pid: ProcessId,
    pub true_time: u64,
    pub kind: EventKind,
    /// Trace record stamped with this event's clock.
    pub record_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Program,
    Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagEdge {
    pub from: EventId,
    pub to: EventId,
    pub kind: EdgeKind,
}

#[derive(Debug, Error)]
pub enum DagError {
    #[error("unknown event id {0}")]
    UnknownEvent(EventId),
    #[error("truth line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("event graph has a cycle")]
    Cyclic,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventDag {
    events: Vec<DagEvent>,
    edges: Vec<DagEdge>,
    successors: Vec<Vec<EventId>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TruthLine {
    Event(DagEvent),
    Edge(DagEdge),
}

impl EventDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[DagEvent] {
        &self.events
    }

    pub fn edges(&self) -> &[DagEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event(&self, id: EventId) -> Result<&DagEvent, DagError> {
        self.events.get(id).ok_or(DagError::UnknownEvent(id))
    }

    pub(crate) fn event_mut(&mut self, id: EventId) -> &mut DagEvent {
        &mut self.events[id]
    }

    /// Adds an event; ids are dense and assigned in insertion order.
    pub fn add_event(&mut self, pid: ProcessId, true_time: u64, kind: EventKind, record_seq: u64) -> EventId {
        let id = self.events.len();
        self.events.push(DagEvent { id, pid, true_time, kind, record_seq });
        self.successors.push(Vec::new());
        id
    }

    pub fn add_edge(&mut self, from: EventId, to: EventId, kind: EdgeKind) -> Result<(), DagError> {
        self.event(from)?;
        self.event(to)?;
        self.edges.push(DagEdge { from, to, kind });
        self.successors[from].push(to);
        Ok(())
    }

    /// Whether a non-empty directed path leads from `e` to `f`.
    pub fn reachable(&self, e: EventId, f: EventId) -> Result<bool, DagError> {
        self.event(e)?;
        self.event(f)?;
        let mut seen = vec![false; self.events.len()];
        let mut queue: VecDeque<EventId> = self.successors[e].iter().copied().collect();
        while let Some(x) = queue.pop_front() {
            if x == f {
                return Ok(true);
            }
            if std::mem::replace(&mut seen[x], true) {
                continue;
            }
            queue.extend(self.successors[x].iter().copied());
        }
        Ok(false)
    }

    /// Full transitive closure, one bitset row per event.
    pub fn closure(&self) -> Result<Reachability, DagError> {
        let n = self.events.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            indegree[e.to] += 1;
        }
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<EventId> = (0..n).filter(|i| indegree[*i] == 0).collect();
        while let Some(x) = ready.pop() {
            order.push(x);
            for &s in &self.successors[x] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if order.len() != n {
            return Err(DagError::Cyclic);
        }
        let words = n.div_ceil(64);
        let mut rows = vec![0u64; n * words];
        for &x in order.iter().rev() {
            for &s in &self.successors[x] {
                rows[x * words + s / 64] |= 1 << (s % 64);
                for w in 0..words {
                    let v = rows[s * words + w];
                    rows[x * words + w] |= v;
                }
            }
        }
        Ok(Reachability { n, words, rows })
    }

    pub fn write_truth<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, &TruthLine::Event(e.clone()))?;
            out.write_all(b"\n")?;
        }
        for e in &self.edges {
            serde_json::to_writer(&mut out, &TruthLine::Edge(*e))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_truth<R: BufRead>(source: R) -> Result<Self, DagError> {
        let mut dag = EventDag::new();
        let mut edges = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TruthLine = serde_json::from_str(&line)
                .map_err(|e| DagError::Malformed { line: i + 1, reason: e.to_string() })?;
            match parsed {
                TruthLine::Event(e) => {
                    if e.id != dag.events.len() {
                        return Err(DagError::Malformed {
                            line: i + 1,
                            reason: format!("event id {} out of order", e.id),
                        });
                    }
                    dag.add_event(e.pid, e.true_time, e.kind, e.record_seq);
                }
                TruthLine::Edge(e) => edges.push((i + 1, e)),
            }
        }
        for (line, e) in edges {
            dag.add_edge(e.from, e.to, e.kind)
                .map_err(|err| DagError::Malformed { line, reason: err.to_string() })?;
        }
        Ok(dag)
    }
}

/// Precomputed reachability between every pair of events.
#[derive(Debug, Clone)]
pub struct Reachability {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl Reachability {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn reaches(&self, e: EventId, f: EventId) -> bool {
        self.rows[e * self.words + f / 64] & (1 << (f % 64)) != 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> EventDag {
        let mut dag = EventDag::new();
        let a = dag.add_event(0, 1, EventKind::Send, 1);
        let b = dag.add_event(1, 2, EventKind::Receive, 1);
        let c = dag.add_event(0, 3, EventKind::Local, 2);
        let d = dag.add_event(2, 4, EventKind::Local, 3);
        dag.add_edge(a, b, EdgeKind::Message).unwrap();
        dag.add_edge(a, c, EdgeKind::Program).unwrap();
        let _ = d;
        dag
    }

    #[test]
    fn reachability_basics() {
        let dag = diamond();
        assert!(!dag.reachable(0, 0).unwrap());
        assert!(dag.reachable(0, 1).unwrap());
        assert!(!dag.reachable(1, 2).unwrap());
        assert!(!dag.reachable(0, 3).unwrap());
        assert!(matches!(dag.reachable(0, 9), Err(DagError::UnknownEvent(9))));
    }

    #[test]
    fn closure_matches_search() {
        let mut dag = EventDag::new();
        for i in 0..70 {
            dag.add_event(i % 3, i as u64, EventKind::Local, i as u64);
        }
        for i in 0..69 {
            if i % 4 != 3 {
                dag.add_edge(i, i + 1, EdgeKind::Program).unwrap();
            }
            if i + 7 < 70 && i % 5 == 0 {
                dag.add_edge(i, i + 7, EdgeKind::Message).unwrap();
            }
        }
        let closure = dag.closure().unwrap();
        for e in 0..70 {
            for f in 0..70 {
                assert_eq!(closure.reaches(e, f), dag.reachable(e, f).unwrap(), "{e}->{f}");
            }
        }
    }

    #[test]
    fn truth_round_trip() {
        let dag = diamond();
        let mut buf = Vec::new();
        dag.write_truth(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with(r#"{"event":{"id":0"#));
        assert!(text.contains(r#"{"edge":{"from":0,"to":1,"kind":"message"}}"#));
        assert_eq!(EventDag::read_truth(buf.as_slice()).unwrap(), dag);
    }

    #[test]
    fn cyclic_graph_is_rejected() {
        let mut dag = EventDag::new();
        dag.add_event(0, 0, EventKind::Local, 1);
        dag.add_event(0, 0, EventKind::Local, 2);
        dag.add_edge(0, 1, EdgeKind::Program).unwrap();
        dag.add_edge(1, 0, EdgeKind::Program).unwrap();
        assert!(matches!(dag.closure(), Err(DagError::Cyclic)));
    }
}
