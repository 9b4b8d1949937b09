//! Footprint and latency of sparse clocks on synthetic workloads.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use hvcviz_core::sim::{run_simulation, ConfigError, Rate, SimConfig, Topology};
use hvcviz_core::{ClockMode, TraceRecord};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    Ring,
    Complete,
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(Workload::Ring),
            "complete" => Ok(Workload::Complete),
            other => Err(format!("unknown workload `{other}` (expected ring or complete)")),
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Workload::Ring => "ring",
            Workload::Complete => "complete",
        })
    }
}

pub const INTERVAL: u64 = 100;
pub const DURATION: u64 = 10_000;

/// Every process runs a local event and a send about every 50 time units,
/// with epochs of 100. Ring processes only talk to their two neighbours.
pub fn workload_config(n: u32, workload: Workload, epsilon: u64, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(n, DURATION, INTERVAL, epsilon);
    c.seed = seed;
    c.clock_mode = ClockMode::Knowledge;
    c.local_event_rate = Rate::new(1, 50);
    c.message_rate = Rate::new(1, 50);
    c.topology = match workload {
        Workload::Ring => Topology::Ring(1),
        Workload::Complete => Topology::Complete,
    };
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: u32,
    pub workload: Workload,
    pub epsilon: u64,
    pub events: usize,
    pub mean_offset_entries: f64,
    pub max_offset_entries: usize,
    pub mean_counter_entries: f64,
    pub max_counter_entries: usize,
    pub dense_baseline: u32,
    pub sqrt_n: f64,
    pub mean_advance_ns: f64,
    pub mean_merge_ns: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n\tworkload\tepsilon\tevents\tmean_off\tmax_off\tmean_ctr\tmax_ctr\tdense\tsqrt_n\tadvance_ns\tmerge_ns")?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{:.2}\t{}\t{:.2}\t{}\t{}\t{:.2}\t{:.0}\t{:.0}",
                r.n,
                r.workload,
                r.epsilon,
                r.events,
                r.mean_offset_entries,
                r.max_offset_entries,
                r.mean_counter_entries,
                r.max_counter_entries,
                r.dense_baseline,
                r.sqrt_n,
                r.mean_advance_ns,
                r.mean_merge_ns
            )?;
        }
        Ok(())
    }
}

/// Times advance and merge on the clocks a run actually produced.
fn time_operations(records: &[TraceRecord]) -> (f64, f64) {
    let pairs: Vec<_> = records.iter().filter(|r| r.is_message()).map(|r| (r.sender_clock(), r.output_clock())).collect();
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let mode = ClockMode::Knowledge;
    let start = Instant::now();
    for (_, out) in &pairs {
        std::hint::black_box(out.advance((out.max_epoch() + 1) * out.interval(), mode));
    }
    let advance = start.elapsed().as_nanos() as f64 / pairs.len() as f64;
    let start = Instant::now();
    for (sent, out) in &pairs {
        std::hint::black_box(out.merge(sent, out.max_epoch() * out.interval(), mode).expect("shared parameters"));
    }
    let merge = start.elapsed().as_nanos() as f64 / pairs.len() as f64;
    (advance, merge)
}

pub fn bench_row(n: u32, workload: Workload, epsilon: u64, seed: u64) -> Result<BenchRow, ConfigError> {
    let run = run_simulation(&workload_config(n, workload, epsilon, seed))?;
    let (mean_advance_ns, mean_merge_ns) = time_operations(&run.records);
    let s = &run.summary;
    Ok(BenchRow {
        n,
        workload,
        epsilon,
        events: s.events,
        mean_offset_entries: s.mean_offset_entries,
        max_offset_entries: s.max_offset_entries,
        mean_counter_entries: s.mean_counter_entries,
        max_counter_entries: s.max_counter_entries,
        dense_baseline: n,
        sqrt_n: (n as f64).sqrt(),
        mean_advance_ns,
        mean_merge_ns,
    })
}

pub fn run_bench(ns: &[u32], workload: Workload, epsilon: u64, seed: u64) -> Result<BenchReport, ConfigError> {
    let rows = ns.iter().map(|&n| bench_row(n, workload, epsilon, seed)).collect::<Result<_, _>>()?;
    Ok(BenchReport { rows })
}
