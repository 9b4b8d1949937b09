//! Append-only JSON Lines trace log.
//!
//! One [`TraceRecord`] per line. Field names and order are fixed; map keys are
//! decimal process ids in ascending order and absent entries are omitted.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{HybridVectorClock, ProcessId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    SendRecv,
    Local,
    Poll,
    Crash,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::SendRecv => "send_recv",
            EventType::Local => "local",
            EventType::Poll => "poll",
            EventType::Crash => "crash",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub event_type: EventType,
    pub from_node: ProcessId,
    pub to_node: ProcessId,
    /// Ground-truth time of the event. Metadata only; never used for ordering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_time: Option<u64>,
    pub epoch_interval: u64,
    pub output_epsilon: u64,
    pub sender_max_epoch: u64,
    pub sender_offsets: BTreeMap<ProcessId, u64>,
    pub sender_counters: BTreeMap<ProcessId, u64>,
    pub output_max_epoch: u64,
    pub output_offsets: BTreeMap<ProcessId, u64>,
    pub output_counters: BTreeMap<ProcessId, u64>,
    pub broken: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Syntax(serde_json::Error),
    #[error("record does not match schema: {0}")]
    Schema(serde_json::Error),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("seq {seq} does not follow {previous}")]
    OutOfSequence { seq: u64, previous: u64 },
    #[error("`{field}` is {found} but the log uses {expected}")]
    ParameterMismatch { field: &'static str, expected: u64, found: u64 },
}

impl RecordError {
    fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        RecordError::Invalid { field, reason: reason.into() }
    }
}

impl TraceRecord {
    /// A send/receive record from the sender clock after the send and the
    /// receiver clock after the merge.
    pub fn message(seq: u64, sender: &HybridVectorClock, output: &HybridVectorClock) -> Self {
        let mut r = Self::local(seq, output);
        r.event_type = EventType::SendRecv;
        r.from_node = sender.pid();
        r.sender_max_epoch = sender.max_epoch();
        r.sender_offsets = sender.offsets().clone();
        r.sender_counters = sender.counters().clone();
        r
    }

    /// A record for an event on one process; sender and output clocks coincide.
    pub fn local(seq: u64, clock: &HybridVectorClock) -> Self {
        TraceRecord {
            seq,
            event_type: EventType::Local,
            from_node: clock.pid(),
            to_node: clock.pid(),
            physical_time: None,
            epoch_interval: clock.interval(),
            output_epsilon: clock.epsilon(),
            sender_max_epoch: clock.max_epoch(),
            sender_offsets: clock.offsets().clone(),
            sender_counters: clock.counters().clone(),
            output_max_epoch: clock.max_epoch(),
            output_offsets: clock.offsets().clone(),
            output_counters: clock.counters().clone(),
            broken: false,
            failure_reason: None,
        }
    }

    pub fn with_physical_time(mut self, t: u64) -> Self {
        self.physical_time = Some(t);
        self
    }

    pub fn with_failure(mut self, reason: impl Into<String>) -> Self {
        self.broken = true;
        self.failure_reason = Some(reason.into());
        self
    }

    pub fn with_event_type(mut self, event_type: EventType) -> Self {
        self.event_type = event_type;
        self
    }

    pub fn is_message(&self) -> bool {
        self.event_type == EventType::SendRecv
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.epoch_interval == 0 {
            return Err(RecordError::invalid("epoch_interval", "must be at least 1"));
        }
        if self.output_epsilon == 0 {
            return Err(RecordError::invalid("output_epsilon", "must be at least 1"));
        }
        match (&self.failure_reason, self.broken) {
            (None, true) => return Err(RecordError::invalid("failure_reason", "required when broken is true")),
            (Some(_), false) => return Err(RecordError::invalid("failure_reason", "present but broken is false")),
            (Some(r), true) if r.is_empty() => return Err(RecordError::invalid("failure_reason", "empty")),
            _ => {}
        }
        match self.event_type {
            EventType::SendRecv => {
                if self.from_node == self.to_node {
                    return Err(RecordError::invalid("to_node", "a message must cross processes"));
                }
                if self.output_max_epoch < self.sender_max_epoch {
                    return Err(RecordError::invalid(
                        "output_max_epoch",
                        format!("{} is below sender_max_epoch {}", self.output_max_epoch, self.sender_max_epoch),
                    ));
                }
            }
            _ => {
                if self.from_node != self.to_node {
                    return Err(RecordError::invalid("to_node", format!("must equal from_node for {}", self.event_type)));
                }
            }
        }
        check_clock_maps(
            self.from_node,
            self.output_epsilon,
            &self.sender_offsets,
            &self.sender_counters,
            ("sender_offsets", "sender_counters"),
        )?;
        check_clock_maps(
            self.to_node,
            self.output_epsilon,
            &self.output_offsets,
            &self.output_counters,
            ("output_offsets", "output_counters"),
        )
    }

    /// Transmitter clock right after the send. Assumes a validated record.
    pub fn sender_clock(&self) -> HybridVectorClock {
        HybridVectorClock::from_parts(
            self.from_node,
            self.epoch_interval,
            self.output_epsilon,
            self.sender_max_epoch,
            self.sender_offsets.clone(),
            self.sender_counters.clone(),
        )
        .expect("sender clock of a validated record")
    }

    /// Receiver clock right after the merge (or the event itself for non-messages).
    pub fn output_clock(&self) -> HybridVectorClock {
        HybridVectorClock::from_parts(
            self.to_node,
            self.epoch_interval,
            self.output_epsilon,
            self.output_max_epoch,
            self.output_offsets.clone(),
            self.output_counters.clone(),
        )
        .expect("output clock of a validated record")
    }
}

fn check_clock_maps(
    owner: ProcessId,
    epsilon: u64,
    offsets: &BTreeMap<ProcessId, u64>,
    counters: &BTreeMap<ProcessId, u64>,
    (offsets_field, counters_field): (&'static str, &'static str),
) -> Result<(), RecordError> {
    if offsets.contains_key(&owner) {
        return Err(RecordError::invalid(offsets_field, format!("contains the clock's own process {owner}")));
    }
    if let Some((j, v)) = offsets.iter().find(|(_, v)| **v >= epsilon) {
        return Err(RecordError::invalid(
            offsets_field,
            format!("offset {v} for process {j} is not below output_epsilon {epsilon}"),
        ));
    }
    if let Some((j, _)) = counters.iter().find(|(j, v)| **v > 0 && **j != owner && !offsets.contains_key(j)) {
        return Err(RecordError::invalid(counters_field, format!("process {j} has a counter but no offset")));
    }
    Ok(())
}

/// Canonical single-line form, without the trailing newline.
pub fn serialize_record(r: &TraceRecord) -> Result<String, RecordError> {
    r.validate()?;
    Ok(serde_json::to_string(r).expect("trace records always serialize"))
}

pub fn parse_record(line: &str) -> Result<TraceRecord, RecordError> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(RecordError::Syntax)?;
    let record: TraceRecord = serde_json::from_value(value).map_err(RecordError::Schema)?;
    record.validate()?;
    Ok(record)
}

#[derive(Debug, Error)]
#[error("line {line}: {error}")]
pub struct LineIssue {
    pub line: usize,
    #[source]
    pub error: RecordError,
}

#[derive(Debug, Default)]
pub struct LogRead {
    pub records: Vec<TraceRecord>,
    pub issues: Vec<LineIssue>,
}

/// In-memory append-only log. Enforces strictly increasing seq and shared
/// clock parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
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

    pub fn last_seq(&self) -> Option<u64> {
        self.records.last().map(|r| r.seq)
    }

    pub fn append(&mut self, record: TraceRecord) -> Result<(), RecordError> {
        record.validate()?;
        self.check_next(&record)?;
        self.records.push(record);
        Ok(())
    }

    fn check_next(&self, record: &TraceRecord) -> Result<(), RecordError> {
        match self.records.last() {
            Some(last) => check_successor(last, record),
            None => Ok(()),
        }
    }
}

fn check_successor(last: &TraceRecord, record: &TraceRecord) -> Result<(), RecordError> {
    if record.seq <= last.seq {
        return Err(RecordError::OutOfSequence { seq: record.seq, previous: last.seq });
    }
    if record.epoch_interval != last.epoch_interval {
        return Err(RecordError::ParameterMismatch {
            field: "epoch_interval",
            expected: last.epoch_interval,
            found: record.epoch_interval,
        });
    }
    if record.output_epsilon != last.output_epsilon {
        return Err(RecordError::ParameterMismatch {
            field: "output_epsilon",
            expected: last.output_epsilon,
            found: record.output_epsilon,
        });
    }
    Ok(())
}

/// Incremental line reader that remembers where it stopped.
#[derive(Debug, Default)]
struct LineCursor {
    log: TraceLog,
    line_no: usize,
}

impl LineCursor {
    fn consume(&mut self, line: &str, out: &mut LogRead) {
        self.line_no += 1;
        if line.trim().is_empty() {
            return;
        }
        let parsed = parse_record(line).and_then(|r| {
            self.log.check_next(&r)?;
            Ok(r)
        });
        match parsed {
            Ok(r) => {
                self.log.records.push(r.clone());
                out.records.push(r);
            }
            Err(error) => out.issues.push(LineIssue { line: self.line_no, error }),
        }
    }
}

/// Reads every parseable record; bad lines become issues instead of errors.
pub fn read_log<R: BufRead>(source: R) -> io::Result<LogRead> {
    let mut cursor = LineCursor::default();
    let mut out = LogRead::default();
    for line in source.lines() {
        cursor.consume(&line?, &mut out);
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> io::Result<LogRead> {
    read_log(BufReader::new(File::open(path)?))
}

/// Follows a growing log file, returning only complete lines appended since
/// the previous poll.
#[derive(Debug)]
pub struct LogTail {
    path: PathBuf,
    offset: u64,
    cursor: LineCursor,
}

impl LogTail {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        LogTail { path: path.into(), offset: 0, cursor: LineCursor::default() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn poll(&mut self) -> io::Result<LogRead> {
        let mut file = File::open(&self.path)?;
        let len = file.metadata()?.len();
        let mut out = LogRead::default();
        if len <= self.offset {
            return Ok(out);
        }
        file.seek(SeekFrom::Start(self.offset))?;
        let mut buf = Vec::with_capacity((len - self.offset) as usize);
        file.take(len - self.offset).read_to_end(&mut buf)?;
        let Some(end) = buf.iter().rposition(|b| *b == b'\n') else {
            return Ok(out);
        };
        self.offset += end as u64 + 1;
        for line in buf[..end].split(|b| *b == b'\n') {
            self.cursor.consume(&String::from_utf8_lossy(line), &mut out);
        }
        Ok(out)
    }
}

/// Appends canonical lines to a file, one write per record.
pub struct LogWriter<W: Write> {
    out: W,
    last: Option<TraceRecord>,
}

impl LogWriter<File> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(LogWriter::new(File::create(path)?))
    }

    /// Opens for appending; `last` should be the final record already in the file.
    pub fn append_to(path: &Path, last: Option<TraceRecord>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogWriter { out: file, last })
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        LogWriter { out, last: None }
    }

    pub fn append(&mut self, record: &TraceRecord) -> Result<(), WriteError> {
        let line = serialize_record(record)?;
        if let Some(last) = &self.last {
            check_successor(last, record)?;
        }
        let mut bytes = line.into_bytes();
        bytes.push(b'\n');
        self.out.write_all(&bytes)?;
        self.out.flush()?;
        self.last = Some(record.clone());
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ClockMode;

    fn sample_message(seq: u64) -> TraceRecord {
        let a = HybridVectorClock::new(0, 10, 5).unwrap().advance(12, ClockMode::Knowledge);
        let b = HybridVectorClock::new(1, 10, 5).unwrap().merge(&a, 15, ClockMode::Knowledge).unwrap();
        TraceRecord::message(seq, &a, &b).with_physical_time(15)
    }

    #[test]
    fn minimal_local_record_has_empty_maps() {
        let c = HybridVectorClock::new(0, 10, 5).unwrap();
        let line = serialize_record(&TraceRecord::local(0, &c)).unwrap();
        assert_eq!(
            line,
            r#"{"seq":0,"event_type":"local","from_node":0,"to_node":0,"epoch_interval":10,"output_epsilon":5,"sender_max_epoch":0,"sender_offsets":{},"sender_counters":{},"output_max_epoch":0,"output_offsets":{},"output_counters":{},"broken":false}"#
        );
    }

    #[test]
    fn field_order_and_keys() {
        let r = sample_message(7).with_failure("message dropped");
        let line = serialize_record(&r).unwrap();
        assert_eq!(
            line,
            r#"{"seq":7,"event_type":"send_recv","from_node":0,"to_node":1,"physical_time":15,"epoch_interval":10,"output_epsilon":5,"sender_max_epoch":1,"sender_offsets":{},"sender_counters":{"0":1},"output_max_epoch":1,"output_offsets":{"0":0},"output_counters":{"0":1,"1":1},"broken":true,"failure_reason":"message dropped"}"#
        );
        assert_eq!(parse_record(&line).unwrap(), r);
    }

    #[test]
    fn parse_tolerates_order_and_unknown_fields() {
        let line = r#"{"broken":false,"extra":[1,2],"seq":3,"event_type":"local","to_node":2,"from_node":2,"epoch_interval":10,"output_epsilon":5,"sender_max_epoch":1,"sender_offsets":{},"sender_counters":{"2":1},"output_max_epoch":1,"output_offsets":{},"output_counters":{"2":1}}"#;
        let r = parse_record(line).unwrap();
        assert_eq!(r.seq, 3);
        assert_eq!(r.output_counters.get(&2), Some(&1));
    }

    #[test]
    fn parse_rejects_broken_without_reason() {
        let mut r = sample_message(1);
        r.broken = true;
        let line = serde_json::to_string(&r).unwrap();
        match parse_record(&line) {
            Err(RecordError::Invalid { field, .. }) => assert_eq!(field, "failure_reason"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_offset_at_epsilon() {
        let mut r = sample_message(1);
        r.output_offsets.insert(0, 5);
        let line = serde_json::to_string(&r).unwrap();
        assert!(matches!(parse_record(&line), Err(RecordError::Invalid { field: "output_offsets", .. })));
    }

    #[test]
    fn parse_rejects_wrong_types() {
        let line = serde_json::to_string(&sample_message(1)).unwrap().replace("\"seq\":1", "\"seq\":-1");
        assert!(matches!(parse_record(&line), Err(RecordError::Schema(_))));
        assert!(matches!(parse_record("hello"), Err(RecordError::Syntax(_))));
    }

    #[test]
    fn read_log_collects_issues() {
        let mut text = String::new();
        for seq in 1..=3 {
            text.push_str(&serialize_record(&sample_message(seq)).unwrap());
            text.push('\n');
            if seq == 2 {
                text.push_str("hello\n");
            }
        }
        let read = read_log(text.as_bytes()).unwrap();
        assert_eq!(read.records.len(), 3);
        assert_eq!(read.issues.len(), 1);
        assert_eq!(read.issues[0].line, 3);

        let empty = read_log("".as_bytes()).unwrap();
        assert!(empty.records.is_empty() && empty.issues.is_empty());
    }

    #[test]
    fn read_log_flags_duplicate_seq() {
        let line = serialize_record(&sample_message(4)).unwrap();
        let text = format!("{line}\n{line}\n");
        let read = read_log(text.as_bytes()).unwrap();
        assert_eq!(read.records.len(), 1);
        assert!(matches!(read.issues[0].error, RecordError::OutOfSequence { seq: 4, previous: 4 }));
    }

    #[test]
    fn trace_log_rejects_duplicates_and_mismatch() {
        let mut log = TraceLog::new();
        log.append(sample_message(1)).unwrap();
        assert!(log.append(sample_message(1)).is_err());
        let mut other = sample_message(2);
        other.output_epsilon = 6;
        assert!(matches!(log.append(other), Err(RecordError::ParameterMismatch { .. })));
        log.append(sample_message(2)).unwrap();
        assert_eq!(log.last_seq(), Some(2));
    }

    #[test]
    fn writer_and_tail_see_complete_lines_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let mut w = LogWriter::create(&path).unwrap();
        w.append(&sample_message(1)).unwrap();
        assert!(w.append(&sample_message(1)).is_err());

        let mut tail = LogTail::new(&path);
        assert_eq!(tail.poll().unwrap().records.len(), 1);
        assert_eq!(tail.poll().unwrap().records.len(), 0);

        let partial = serialize_record(&sample_message(2)).unwrap();
        let (head, rest) = partial.split_at(20);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(head.as_bytes()).unwrap();
        assert_eq!(tail.poll().unwrap().records.len(), 0);
        f.write_all(rest.as_bytes()).unwrap();
        f.write_all(b"\n").unwrap();
        let read = tail.poll().unwrap();
        assert_eq!(read.records.len(), 1);
        assert_eq!(read.records[0].seq, 2);
        assert!(read.issues.is_empty());
    }
}
