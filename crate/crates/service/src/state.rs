use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use hvcviz_core::order::{
    build_swimlane, order_traces, OrderError, OrderMode, OrderedTrace, SwimlaneModel, TimeMode,
};
use hvcviz_core::trace::{LineIssue, LogTail};
use hvcviz_core::TraceRecord;

/// An immutable view of the log prefix read so far, ordered both ways.
#[derive(Debug)]
pub struct Snapshot {
    records: Vec<TraceRecord>,
    causal: OrderedTrace,
    alg3: OrderedTrace,
    skipped_lines: usize,
}

impl Snapshot {
    pub fn empty() -> Self {
        Snapshot::build(Vec::new(), 0).expect("empty trace orders")
    }

    fn build(records: Vec<TraceRecord>, skipped_lines: usize) -> Result<Self, OrderError> {
        let causal = order_traces(&records, OrderMode::Causal)?;
        let alg3 = order_traces(&records, OrderMode::Alg3)?;
        Ok(Snapshot { records, causal, alg3, skipped_lines })
    }

    /// Highest seq ingested, or 0 for an empty log.
    pub fn cursor(&self) -> u64 {
        self.records.last().map_or(0, |r| r.seq)
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn ordered(&self, mode: OrderMode) -> &OrderedTrace {
        match mode {
            OrderMode::Causal => &self.causal,
            OrderMode::Alg3 => &self.alg3,
        }
    }

    pub fn model(&self, mode: OrderMode, time: TimeMode) -> SwimlaneModel {
        build_swimlane(self.ordered(mode), time)
    }

    /// Model of the records with seq up to `since`.
    pub fn model_at(&self, since: u64, mode: OrderMode, time: TimeMode) -> Result<SwimlaneModel, OrderError> {
        let end = self.records.partition_point(|r| r.seq <= since);
        Ok(build_swimlane(&order_traces(&self.records[..end], mode)?, time))
    }
}

/// Shared handle: one writer swaps in whole snapshots, readers clone the
/// current one.
#[derive(Debug, Clone)]
pub struct SharedSnapshot(Arc<RwLock<Arc<Snapshot>>>);

impl SharedSnapshot {
    pub fn new(snapshot: Snapshot) -> Self {
        SharedSnapshot(Arc::new(RwLock::new(Arc::new(snapshot))))
    }

    pub fn current(&self) -> Arc<Snapshot> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn replace(&self, snapshot: Snapshot) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub new_records: usize,
    pub issues: Vec<LineIssue>,
}

/// Single writer that follows the log file and publishes snapshots.
#[derive(Debug)]
pub struct Ingestor {
    tail: LogTail,
    records: Vec<TraceRecord>,
    skipped_lines: usize,
    shared: SharedSnapshot,
}

impl Ingestor {
    pub fn new(path: impl Into<PathBuf>, shared: SharedSnapshot) -> Self {
        Ingestor { tail: LogTail::new(path), records: Vec::new(), skipped_lines: 0, shared }
    }

    pub fn path(&self) -> &Path {
        self.tail.path()
    }

    pub fn step(&mut self) -> io::Result<IngestOutcome> {
        let read = self.tail.poll()?;
        self.skipped_lines += read.issues.len();
        let outcome = IngestOutcome { new_records: read.records.len(), issues: read.issues };
        if outcome.new_records == 0 && outcome.issues.is_empty() {
            return Ok(outcome);
        }
        let mut records = self.records.clone();
        records.extend(read.records);
        match Snapshot::build(records.clone(), self.skipped_lines) {
            Ok(snapshot) => {
                self.records = records;
                self.shared.replace(snapshot);
                Ok(outcome)
            }
            Err(e) => Err(io::Error::new(io::ErrorKind::InvalidData, e)),
        }
    }
}
