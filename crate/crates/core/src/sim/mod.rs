//! Deterministic discrete-event simulation of processes exchanging messages.
//!
//! Each process owns a drifting physical clock and a [`HybridVectorClock`].
//! Sends advance the sender's clock, deliveries merge at the receiver, and a
//! poll monitor turns crashed processes into crash records. Alongside the
//! trace the run records an [`EventDag`] of true happens-before edges.

mod config;
mod dag;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clock::{ActiveSize, ClockMode, HybridVectorClock, ProcessId};
use crate::trace::{EventType, LogWriter, TraceRecord, WriteError};

pub use config::{ConfigError, CrashPlan, FailurePlan, Rate, SimConfig, Topology};
pub use dag::{DagEdge, DagError, DagEvent, EdgeKind, EventDag, EventId, EventKind, Reachability};

pub const MESSAGE_FAILURE_REASON: &str = "message failure injected";

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimSummary {
    pub events: usize,
    pub local_events: usize,
    pub messages: usize,
    pub broken_messages: usize,
    pub undeliverable: usize,
    pub crash_records: usize,
    pub records: usize,
    pub end_time: u64,
    pub mean_offset_entries: f64,
    pub max_offset_entries: usize,
    pub mean_counter_entries: f64,
    pub max_counter_entries: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub records: Vec<TraceRecord>,
    pub dag: EventDag,
    /// `active_size` of the updated clock after every clock operation.
    pub samples: Vec<ActiveSize>,
    pub summary: SimSummary,
    pub warnings: Vec<String>,
}

impl SimResult {
    pub fn write_trace<W: Write>(&self, out: W) -> Result<W, WriteError> {
        let mut writer = LogWriter::new(out);
        for r in &self.records {
            writer.append(r)?;
        }
        Ok(writer.into_inner())
    }

    pub fn write_truth<W: Write>(&self, out: W) -> io::Result<()> {
        self.dag.write_truth(out)
    }

    pub fn trace_bytes(&self) -> Vec<u8> {
        self.write_trace(Vec::new()).expect("simulated records are valid")
    }

    pub fn truth_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_truth(&mut buf).expect("writing to memory");
        buf
    }
}

// Same-time ties run in (pid, kind, insertion) order; crashes take effect
// before anything else the process would do at that instant.
const KIND_CRASH: u8 = 0;
const KIND_DELIVER: u8 = 1;
const KIND_LOCAL: u8 = 2;
const KIND_SEND: u8 = 3;
const KIND_POLL: u8 = 4;

#[derive(Debug)]
enum Action {
    Crash(ProcessId),
    Deliver(usize),
    Local(ProcessId),
    Send(ProcessId),
    Poll,
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    pid: u32,
    kind: u8,
    order: u64,
    action: Action,
}

impl Scheduled {
    fn key(&self) -> (u64, u32, u8, u64) {
        (self.time, self.pid, self.kind, self.order)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Process {
    clock: HybridVectorClock,
    drift_ppm: i64,
    skew: u64,
    neighbours: Vec<ProcessId>,
    last_event: Option<EventId>,
    crashed: bool,
    missed_polls: u32,
    flagged: bool,
}

struct Message {
    from: ProcessId,
    to: ProcessId,
    clock: HybridVectorClock,
    send_event: EventId,
    broken: bool,
}

struct Simulator<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Scheduled>,
    order: u64,
    procs: Vec<Process>,
    messages: Vec<Message>,
    records: Vec<TraceRecord>,
    dag: EventDag,
    samples: Vec<ActiveSize>,
    summary: SimSummary,
}

pub fn run_simulation(config: &SimConfig) -> Result<SimResult, ConfigError> {
    let warnings = config.validate()?;
    let mut sim = Simulator::new(config);
    sim.run();
    Ok(sim.finish(warnings))
}

impl<'a> Simulator<'a> {
    fn new(config: &'a SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = config.n_processes;
        let drift = config.drift_ppm as i64;
        let procs = (0..n)
            .map(|pid| {
                let drift_ppm = rng.random_range(-drift..=drift);
                let skew = rng.random_range(0..=config.initial_skew_max);
                Process {
                    clock: HybridVectorClock::new(pid, config.epoch_interval, config.epsilon)
                        .expect("validated parameters"),
                    drift_ppm,
                    skew,
                    neighbours: neighbours(config.topology, pid, n),
                    last_event: None,
                    crashed: false,
                    missed_polls: 0,
                    flagged: false,
                }
            })
            .collect();
        Simulator {
            config,
            rng,
            queue: BinaryHeap::new(),
            order: 0,
            procs,
            messages: Vec::new(),
            records: Vec::new(),
            dag: EventDag::new(),
            samples: Vec::new(),
            summary: SimSummary::default(),
        }
    }

    fn schedule(&mut self, time: u64, pid: u32, kind: u8, action: Action) {
        self.order += 1;
        self.queue.push(Scheduled { time, pid, kind, order: self.order, action });
    }

    fn gap(&mut self, rate: Rate) -> Option<u64> {
        if rate.is_zero() {
            return None;
        }
        // Uniform on [1, 2*mean - 1], so the mean gap is den/num.
        let hi = (2 * rate.den / rate.num).saturating_sub(1).max(1);
        Some(self.rng.random_range(1..=hi))
    }

    fn schedule_tick(&mut self, now: u64, pid: ProcessId, kind: u8) {
        let rate = if kind == KIND_LOCAL { self.config.local_event_rate } else { self.config.message_rate };
        if let Some(g) = self.gap(rate) {
            let at = now + g;
            if at <= self.config.duration {
                let action = if kind == KIND_LOCAL { Action::Local(pid) } else { Action::Send(pid) };
                self.schedule(at, pid, kind, action);
            }
        }
    }

    fn run(&mut self) {
        for pid in 0..self.config.n_processes {
            self.schedule_tick(0, pid, KIND_LOCAL);
            self.schedule_tick(0, pid, KIND_SEND);
        }
        for c in self.config.failure_plan.crashes.clone() {
            self.schedule(c.time, c.pid, KIND_CRASH, Action::Crash(c.pid));
        }
        let poll = self.config.poll_interval;
        if poll <= self.config.duration || !self.config.failure_plan.crashes.is_empty() {
            self.schedule(poll, self.config.n_processes, KIND_POLL, Action::Poll);
        }

        while let Some(item) = self.queue.pop() {
            let now = item.time;
            self.summary.end_time = now;
            match item.action {
                Action::Crash(pid) => self.procs[pid as usize].crashed = true,
                Action::Local(pid) => self.local(now, pid),
                Action::Send(pid) => self.send(now, pid),
                Action::Deliver(m) => self.deliver(now, m),
                Action::Poll => self.poll(now),
            }
        }
    }

    fn physical(&self, pid: ProcessId, now: u64) -> u64 {
        let p = &self.procs[pid as usize];
        let rate = 1_000_000i128 + p.drift_ppm as i128;
        p.skew + (now as i128 * rate / 1_000_000) as u64
    }

    fn add_event(&mut self, pid: ProcessId, now: u64, kind: EventKind, record_seq: u64) -> EventId {
        let id = self.dag.add_event(pid, now, kind, record_seq);
        if let Some(prev) = self.procs[pid as usize].last_event.replace(id) {
            self.dag.add_edge(prev, id, EdgeKind::Program).expect("known events");
        }
        self.summary.events += 1;
        id
    }

    fn next_seq(&self) -> u64 {
        self.records.len() as u64 + 1
    }

    fn sample(&mut self, pid: ProcessId) {
        self.samples.push(self.procs[pid as usize].clock.active_size());
    }

    fn local(&mut self, now: u64, pid: ProcessId) {
        if self.procs[pid as usize].crashed {
            return;
        }
        let phy = self.physical(pid, now);
        let p = &mut self.procs[pid as usize];
        p.clock = p.clock.advance(phy, self.config.clock_mode);
        let seq = self.next_seq();
        self.add_event(pid, now, EventKind::Local, seq);
        let record = TraceRecord::local(seq, &self.procs[pid as usize].clock).with_physical_time(now);
        self.records.push(record);
        self.summary.local_events += 1;
        self.sample(pid);
        self.schedule_tick(now, pid, KIND_LOCAL);
    }

    fn send(&mut self, now: u64, pid: ProcessId) {
        if self.procs[pid as usize].crashed {
            return;
        }
        let neighbours = &self.procs[pid as usize].neighbours;
        let to = neighbours[self.rng.random_range(0..neighbours.len())];
        let phy = self.physical(pid, now);
        let p = &mut self.procs[pid as usize];
        p.clock = p.clock.advance(phy, self.config.clock_mode);
        let clock = p.clock.clone();
        // The record seq is assigned at delivery.
        let send_event = self.add_event(pid, now, EventKind::Send, 0);
        self.sample(pid);

        let latency = self.rng.random_range(self.config.latency_min..=self.config.latency_max);
        let p_fail = self.config.failure_plan.message_failure_probability;
        let broken = !p_fail.is_zero() && self.rng.random_range(0..p_fail.den) < p_fail.num;
        self.messages.push(Message { from: pid, to, clock, send_event, broken });
        let m = self.messages.len() - 1;
        self.schedule(now + latency, to, KIND_DELIVER, Action::Deliver(m));
        self.schedule_tick(now, pid, KIND_SEND);
    }

    fn deliver(&mut self, now: u64, m: usize) {
        let seq = self.next_seq();
        let (from, to, send_event, broken) = {
            let msg = &self.messages[m];
            (msg.from, msg.to, msg.send_event, msg.broken)
        };
        self.dag.event_mut(send_event).record_seq = seq;

        if self.procs[to as usize].crashed {
            let record = TraceRecord::local(seq, &self.messages[m].clock)
                .with_physical_time(now)
                .with_failure(format!("receiver {to} crashed"));
            debug_assert_eq!(record.from_node, from);
            self.records.push(record);
            self.summary.undeliverable += 1;
            return;
        }

        let phy = self.physical(to, now);
        let mode: ClockMode = self.config.clock_mode;
        let merged = self.procs[to as usize]
            .clock
            .merge(&self.messages[m].clock, phy, mode)
            .expect("processes share clock parameters");
        self.procs[to as usize].clock = merged;
        let recv = self.add_event(to, now, EventKind::Receive, seq);
        self.dag.add_edge(send_event, recv, EdgeKind::Message).expect("known events");
        self.sample(to);

        let mut record =
            TraceRecord::message(seq, &self.messages[m].clock, &self.procs[to as usize].clock).with_physical_time(now);
        if broken {
            record = record.with_failure(MESSAGE_FAILURE_REASON);
            self.summary.broken_messages += 1;
        }
        self.records.push(record);
        self.summary.messages += 1;
    }

    fn poll(&mut self, now: u64) {
        let threshold = self.config.missed_polls_threshold;
        for pid in 0..self.config.n_processes {
            let seq = self.next_seq();
            let p = &mut self.procs[pid as usize];
            if !p.crashed {
                p.missed_polls = 0;
                continue;
            }
            p.missed_polls += 1;
            if p.missed_polls >= threshold && !p.flagged {
                p.flagged = true;
                let reason = format!("missed {} polls", p.missed_polls);
                let record = TraceRecord::local(seq, &p.clock)
                    .with_event_type(EventType::Crash)
                    .with_physical_time(now)
                    .with_failure(reason);
                self.records.push(record);
                self.summary.crash_records += 1;
            }
        }

        let next = now + self.config.poll_interval;
        let pending = self.config.failure_plan.crashes.iter().any(|c| !self.procs[c.pid as usize].flagged);
        if next <= self.config.duration || pending {
            self.schedule(next, self.config.n_processes, KIND_POLL, Action::Poll);
        }
    }

    fn finish(mut self, warnings: Vec<String>) -> SimResult {
        let n = self.samples.len().max(1) as f64;
        self.summary.records = self.records.len();
        self.summary.mean_offset_entries = self.samples.iter().map(|s| s.offset_entries).sum::<usize>() as f64 / n;
        self.summary.mean_counter_entries = self.samples.iter().map(|s| s.counter_entries).sum::<usize>() as f64 / n;
        self.summary.max_offset_entries = self.samples.iter().map(|s| s.offset_entries).max().unwrap_or(0);
        self.summary.max_counter_entries = self.samples.iter().map(|s| s.counter_entries).max().unwrap_or(0);
        SimResult { records: self.records, dag: self.dag, samples: self.samples, summary: self.summary, warnings }
    }
}

fn neighbours(topology: Topology, pid: ProcessId, n: u32) -> Vec<ProcessId> {
    let mut out: Vec<ProcessId> = match topology {
        Topology::Complete => (0..n).filter(|j| *j != pid).collect(),
        Topology::Star if pid == 0 => (1..n).collect(),
        Topology::Star => vec![0],
        Topology::Ring(k) => (1..=k.min(n))
            .flat_map(|d| [(pid + d) % n, (pid + n - d % n) % n])
            .filter(|j| *j != pid)
            .collect(),
    };
    out.sort_unstable();
    out.dedup();
    out
}
