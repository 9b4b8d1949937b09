//! The `hvcviz` command line: simulate, order, check, serve and bench.
//!
//! Exit codes: 0 success, 1 verification failures, 2 usage or configuration
//! errors, 3 corrupt input.

pub mod bench;

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use hvcviz_core::order::{order_traces, OrderError, OrderMode, OrderedTrace, TimeMode};
use hvcviz_core::sim::{run_simulation, EventDag, SimConfig};
use hvcviz_core::trace::{read_log_file, serialize_record, LogRead};
use hvcviz_core::verify::check_run;
use hvcviz_service::{ServiceConfig, DEFAULT_PORT};

use crate::bench::{run_bench, Workload};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CORRUPT: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_USAGE, message: message.to_string() }
    }

    fn corrupt(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_CORRUPT, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "hvcviz", version, about = "Hybrid vector clock tracing, ordering and visualization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded simulation and write its trace and ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the records of a trace in causal or alg3 order.
    Order {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = OrderMode::Causal)]
        mode: OrderMode,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Verify a trace's clocks against the event graph of its run.
    Check {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also require unrelated events to compare as concurrent.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Serve the swimlane API over a live log.
    Serve {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, env = "HVCVIZ_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = OrderMode::Causal)]
        mode: OrderMode,
        #[arg(long, default_value_t = TimeMode::Ordinal)]
        time: TimeMode,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Measure clock footprint for a list of process counts.
    Bench {
        /// Comma-separated process counts.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u32>,
        #[arg(long, default_value = "ring")]
        workload: Workload,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        epsilon: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Runs one command; the returned code is the process exit status.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate { config, out, truth, seed } => simulate(&config, &out, &truth, seed),
        Command::Order { log, mode, format } => order(&log, mode, format),
        Command::Check { log, truth, exhaustive } => check(&log, &truth, exhaustive),
        Command::Serve { log, port, mode, time, poll_ms, assets } => serve(ServiceConfig {
            log,
            port,
            mode,
            time_mode: time,
            poll: Duration::from_millis(poll_ms.max(1)),
            assets,
        }),
        Command::Bench { n, workload, out, epsilon, seed } => bench(&n, workload, &out, epsilon, seed),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::usage(format!("cannot create {}: {e}", path.display())))
}

fn simulate(config: &Path, out: &Path, truth: &Path, seed: Option<u64>) -> Result<i32, CliError> {
    let mut config = SimConfig::load(config).map_err(CliError::usage)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let result = run_simulation(&config).map_err(CliError::usage)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let io_err = |e: &dyn fmt::Display| CliError::usage(format!("write failed: {e}"));
    let mut trace = result.write_trace(create(out)?).map_err(|e| io_err(&e))?;
    trace.flush().map_err(|e| io_err(&e))?;
    let mut truth_out = create(truth)?;
    result.write_truth(&mut truth_out).map_err(|e| io_err(&e))?;
    truth_out.flush().map_err(|e| io_err(&e))?;
    let s = &result.summary;
    println!(
        "events {} records {} messages {} failures {} undeliverable {} crashes {}",
        s.events, s.records, s.messages, s.broken_messages, s.undeliverable, s.crash_records
    );
    Ok(EXIT_OK)
}

fn read_trace(path: &Path) -> Result<LogRead, CliError> {
    read_log_file(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn order_error(e: OrderError) -> CliError {
    CliError::corrupt(format!("corrupt log: {e}"))
}

pub fn tsv(ot: &OrderedTrace) -> String {
    if ot.is_empty() {
        return String::new();
    }
    let mut out = String::from(
        "seq\tposition\tevent_type\tfrom_node\tto_node\tsend_epoch\tsend_counter\toutput_epoch\toutput_counter\tbroken\tfailure_reason\n",
    );
    for (i, r) in ot.records().iter().enumerate() {
        let send = hvcviz_core::order::send_key(r);
        let output = hvcviz_core::order::output_key(r);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.seq,
            i,
            r.event_type,
            r.from_node,
            r.to_node,
            send.epoch,
            send.counter,
            output.epoch,
            output.counter,
            r.broken,
            r.failure_reason.as_deref().unwrap_or("")
        ));
    }
    out
}

fn order(log: &Path, mode: OrderMode, format: Format) -> Result<i32, CliError> {
    let read = read_trace(log)?;
    if let Some(issue) = read.issues.first() {
        return Err(CliError::corrupt(format!(
            "corrupt log: line {}: {} ({} bad lines)",
            issue.line,
            issue.error,
            read.issues.len()
        )));
    }
    let ot = order_traces(&read.records, mode).map_err(order_error)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let text = match format {
        Format::Tsv => tsv(&ot),
        Format::Json => ot
            .records()
            .iter()
            .map(|r| serialize_record(r).map(|l| l + "\n"))
            .collect::<Result<String, _>>()
            .map_err(CliError::corrupt)?,
    };
    out.write_all(text.as_bytes()).map_err(CliError::usage)?;
    Ok(EXIT_OK)
}

fn check(log: &Path, truth: &Path, exhaustive: bool) -> Result<i32, CliError> {
    let read = read_trace(log)?;
    for issue in &read.issues {
        eprintln!("skipping line {}: {}", issue.line, issue.error);
    }
    let file = File::open(truth).map_err(|e| CliError::usage(format!("cannot read {}: {e}", truth.display())))?;
    let dag = EventDag::read_truth(BufReader::new(file)).map_err(|e| CliError::corrupt(format!("corrupt truth: {e}")))?;
    let report = check_run(&read.records, &dag, exhaustive).map_err(|e| CliError::corrupt(format!("corrupt input: {e}")))?;
    println!(
        "events {} reachable pairs {} unrelated pairs {}",
        report.events, report.reachable_pairs, report.unrelated_pairs
    );
    println!(
        "soundness violations {} completeness violations {} missing records {}{}",
        report.soundness_violations,
        report.completeness_violations,
        report.missing_records,
        if exhaustive { "" } else { " (completeness not checked)" }
    );
    for issue in &report.examples {
        println!("{}", serde_json::to_string(issue).expect("issue serializes"));
    }
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn serve(config: ServiceConfig) -> Result<i32, CliError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::usage)?;
    runtime.block_on(async move {
        let listener = hvcviz_service::bind(config.port).await.map_err(CliError::usage)?;
        let addr = listener.local_addr().map_err(CliError::usage)?;
        eprintln!("serving {} on http://{addr}", config.log.display());
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        hvcviz_service::serve(config, listener, shutdown).await.map_err(CliError::usage)
    })?;
    Ok(EXIT_OK)
}

fn bench(ns: &[u32], workload: Workload, out: &Path, epsilon: u64, seed: u64) -> Result<i32, CliError> {
    if let Some(n) = ns.iter().find(|&&n| n < 2) {
        return Err(CliError::usage(format!("invalid `n`: {n} is below 2")));
    }
    let report = run_bench(ns, workload, epsilon, seed).map_err(CliError::usage)?;
    let mut file = create(out)?;
    serde_json::to_writer_pretty(&mut file, &report).map_err(CliError::usage)?;
    file.write_all(b"\n").and_then(|_| file.flush()).map_err(CliError::usage)?;
    print!("{report}");
    Ok(EXIT_OK)
}
