//! Swimlane model: one lane per process, a node per record endpoint and an
//! arrow per message.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{OrderError, OrderMode, OrderedTrace};
use crate::clock::{CausalRelation, HybridVectorClock, ProcessId};
use crate::trace::{EventType, TraceRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    #[default]
    Ordinal,
    Epoch,
}

impl fmt::Display for TimeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeMode::Ordinal => "ordinal",
            TimeMode::Epoch => "epoch",
        })
    }
}

impl FromStr for TimeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordinal" => Ok(TimeMode::Ordinal),
            "epoch" => Ok(TimeMode::Epoch),
            other => Err(format!("unknown time mode `{other}` (expected ordinal or epoch)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Send,
    Recv,
    Local,
    Poll,
    Crash,
}

/// Horizontal coordinate: the order position, or an epoch with the counter
/// interpolated inside it, printed with six decimals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XPos {
    Ordinal(u64),
    Epoch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashMarker {
    pub seq: u64,
    pub position: usize,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lane {
    pub pid: ProcessId,
    pub crash: Option<CrashMarker>,
}

pub type NodeKey = (u64, Endpoint);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub seq: u64,
    pub endpoint: Endpoint,
    pub lane: ProcessId,
    pub position: usize,
    pub x: XPos,
    pub max_epoch: u64,
    pub counter: u64,
    pub display_value: u64,
    pub broken: bool,
}

impl Node {
    pub fn key(&self) -> NodeKey {
        (self.seq, self.endpoint)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrow {
    pub seq: u64,
    pub from_lane: ProcessId,
    pub to_lane: ProcessId,
    pub position: usize,
    pub from_x: XPos,
    pub to_x: XPos,
    pub broken: bool,
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwimlaneModel {
    pub mode: OrderMode,
    pub time_mode: TimeMode,
    pub lanes: Vec<Lane>,
    pub nodes: Vec<Node>,
    pub arrows: Vec<Arrow>,
}

impl SwimlaneModel {
    pub fn empty(mode: OrderMode, time_mode: TimeMode) -> Self {
        SwimlaneModel { mode, time_mode, lanes: Vec::new(), nodes: Vec::new(), arrows: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty() && self.nodes.is_empty() && self.arrows.is_empty()
    }

    /// Record seqs that contribute a node.
    pub fn seqs(&self) -> BTreeSet<u64> {
        self.nodes.iter().map(|n| n.seq).collect()
    }

    /// Elements of `self` that are missing from `previous` or differ from
    /// the element with the same key there.
    pub fn delta_from(&self, previous: &SwimlaneModel) -> SwimlaneModel {
        let lanes: HashMap<ProcessId, &Lane> = previous.lanes.iter().map(|l| (l.pid, l)).collect();
        let nodes: HashMap<NodeKey, &Node> = previous.nodes.iter().map(|n| (n.key(), n)).collect();
        let arrows: HashMap<u64, &Arrow> = previous.arrows.iter().map(|a| (a.seq, a)).collect();
        SwimlaneModel {
            mode: self.mode,
            time_mode: self.time_mode,
            lanes: self.lanes.iter().filter(|l| lanes.get(&l.pid) != Some(l)).cloned().collect(),
            nodes: self.nodes.iter().filter(|n| nodes.get(&n.key()) != Some(n)).cloned().collect(),
            arrows: self.arrows.iter().filter(|a| arrows.get(&a.seq) != Some(a)).cloned().collect(),
        }
    }

    /// Upserts every element of `delta` by key.
    pub fn apply(&mut self, delta: &SwimlaneModel) {
        self.mode = delta.mode;
        self.time_mode = delta.time_mode;
        let mut lanes: BTreeMap<ProcessId, Lane> = self.lanes.drain(..).map(|l| (l.pid, l)).collect();
        lanes.extend(delta.lanes.iter().map(|l| (l.pid, l.clone())));
        let mut nodes: HashMap<NodeKey, Node> = self.nodes.drain(..).map(|n| (n.key(), n)).collect();
        nodes.extend(delta.nodes.iter().map(|n| (n.key(), n.clone())));
        let mut arrows: HashMap<u64, Arrow> = self.arrows.drain(..).map(|a| (a.seq, a)).collect();
        arrows.extend(delta.arrows.iter().map(|a| (a.seq, a.clone())));
        self.lanes = lanes.into_values().collect();
        self.nodes = nodes.into_values().collect();
        self.arrows = arrows.into_values().collect();
        self.sort();
    }

    fn sort(&mut self) {
        self.lanes.sort_by_key(|l| l.pid);
        self.nodes.sort_by_key(|n| (n.position, n.endpoint));
        self.arrows.sort_by_key(|a| (a.position, a.seq));
    }

    fn restrict(&self, seqs: &BTreeSet<u64>) -> SwimlaneModel {
        let nodes: Vec<Node> = self.nodes.iter().filter(|n| seqs.contains(&n.seq)).cloned().collect();
        let pids: BTreeSet<ProcessId> = nodes.iter().map(|n| n.lane).collect();
        SwimlaneModel {
            mode: self.mode,
            time_mode: self.time_mode,
            lanes: self.lanes.iter().filter(|l| pids.contains(&l.pid)).cloned().collect(),
            nodes,
            arrows: self.arrows.iter().filter(|a| seqs.contains(&a.seq)).cloned().collect(),
        }
    }
}

struct Summary {
    epoch: u64,
    counter: u64,
}

fn sender_summary(r: &TraceRecord) -> Summary {
    Summary { epoch: r.sender_max_epoch, counter: r.sender_counters.get(&r.from_node).copied().unwrap_or(0) }
}

fn output_summary(r: &TraceRecord) -> Summary {
    Summary { epoch: r.output_max_epoch, counter: r.output_counters.get(&r.to_node).copied().unwrap_or(0) }
}

fn epoch_x(s: &Summary, max_counter: &HashMap<u64, u64>) -> XPos {
    let den = 1 + max_counter.get(&s.epoch).copied().unwrap_or(0) as u128;
    let micros = s.counter as u128 * 1_000_000 / den;
    XPos::Epoch(format!("{}.{:06}", s.epoch, micros))
}

pub fn build_swimlane(ot: &OrderedTrace, time_mode: TimeMode) -> SwimlaneModel {
    let mut max_counter: HashMap<u64, u64> = HashMap::new();
    for r in ot.records() {
        for s in [sender_summary(r), output_summary(r)] {
            let m = max_counter.entry(s.epoch).or_insert(0);
            *m = (*m).max(s.counter);
        }
    }
    let x = |s: &Summary, position: usize| match time_mode {
        TimeMode::Ordinal => XPos::Ordinal(position as u64),
        TimeMode::Epoch => epoch_x(s, &max_counter),
    };

    let mut model = SwimlaneModel::empty(ot.mode(), time_mode);
    let mut lanes: BTreeMap<ProcessId, Lane> = BTreeMap::new();
    for (position, r) in ot.records().iter().enumerate() {
        for pid in [r.from_node, r.to_node] {
            lanes.entry(pid).or_insert(Lane { pid, crash: None });
        }
        let node = |endpoint: Endpoint, lane: ProcessId, s: &Summary| Node {
            seq: r.seq,
            endpoint,
            lane,
            position,
            x: x(s, position),
            max_epoch: s.epoch,
            counter: s.counter,
            display_value: s.epoch + s.counter,
            broken: r.broken,
        };
        let out = output_summary(r);
        match r.event_type {
            EventType::SendRecv => {
                let send = sender_summary(r);
                model.arrows.push(Arrow {
                    seq: r.seq,
                    from_lane: r.from_node,
                    to_lane: r.to_node,
                    position,
                    from_x: x(&send, position),
                    to_x: x(&out, position),
                    broken: r.broken,
                    failure_reason: r.failure_reason.clone(),
                });
                model.nodes.push(node(Endpoint::Send, r.from_node, &send));
                model.nodes.push(node(Endpoint::Recv, r.to_node, &out));
            }
            EventType::Local => model.nodes.push(node(Endpoint::Local, r.from_node, &out)),
            EventType::Poll => model.nodes.push(node(Endpoint::Poll, r.from_node, &out)),
            EventType::Crash => {
                model.nodes.push(node(Endpoint::Crash, r.from_node, &out));
                let lane = lanes.get_mut(&r.from_node).expect("lane inserted above");
                if lane.crash.is_none() {
                    lane.crash = Some(CrashMarker { seq: r.seq, position, reason: r.failure_reason.clone() });
                }
            }
        }
    }
    model.lanes = lanes.into_values().collect();
    model.sort();
    model
}

struct Bits {
    words: usize,
    rows: Vec<u64>,
}

impl Bits {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        Bits { words, rows: vec![0; n * words] }
    }

    fn set(&mut self, row: usize, col: usize) {
        self.rows[row * self.words + col / 64] |= 1 << (col % 64);
    }

    fn row(&self, row: usize) -> &[u64] {
        &self.rows[row * self.words..(row + 1) * self.words]
    }

    /// Members of `row` not reachable through another member.
    fn covering(&self, row: usize) -> Vec<usize> {
        let members = self.row(row);
        let mut covered = vec![0u64; self.words];
        for z in ones(members) {
            for (c, w) in covered.iter_mut().zip(self.row(z)) {
                *c |= w;
            }
        }
        let direct: Vec<u64> = members.iter().zip(&covered).map(|(m, c)| m & !c).collect();
        ones(&direct).collect()
    }
}

fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &bits)| (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b))
}

fn start_clock(r: &TraceRecord) -> HybridVectorClock {
    if r.is_message() {
        r.sender_clock()
    } else {
        r.output_clock()
    }
}

/// The record `seq` with its causal past and future up to `depth` hops, or
/// without limit when `depth` is `None`. A hop joins `x` to `y` when `x`'s
/// output clock is before the clock at which `y` starts and no third record
/// sits between them.
pub fn isolate(
    ot: &OrderedTrace,
    seq: u64,
    depth: Option<usize>,
    time_mode: TimeMode,
) -> Result<SwimlaneModel, OrderError> {
    let target = ot.position(seq).ok_or(OrderError::NotFound(seq))?;
    let records = ot.records();
    let n = records.len();
    let outputs: Vec<HybridVectorClock> = records.iter().map(TraceRecord::output_clock).collect();
    let starts: Vec<HybridVectorClock> = records.iter().map(start_clock).collect();
    let mut preds = Bits::new(n);
    let mut succs = Bits::new(n);
    for x in 0..n {
        for y in 0..n {
            if x != y && outputs[x].compare(&starts[y])? == CausalRelation::Before {
                preds.set(y, x);
                succs.set(x, y);
            }
        }
    }

    let mut selected = BTreeSet::from([seq]);
    for rel in [&preds, &succs] {
        let mut seen = vec![false; n];
        seen[target] = true;
        let mut frontier = vec![target];
        let mut hops = 0;
        while !frontier.is_empty() && depth.is_none_or(|d| hops < d) {
            let mut next = Vec::new();
            for &f in &frontier {
                for c in rel.covering(f) {
                    if !std::mem::replace(&mut seen[c], true) {
                        selected.insert(records[c].seq);
                        next.push(c);
                    }
                }
            }
            frontier = next;
            hops += 1;
        }
    }
    Ok(build_swimlane(ot, time_mode).restrict(&selected))
}
