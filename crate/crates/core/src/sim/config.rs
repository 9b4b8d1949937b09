use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{ClockMode, ProcessId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(String),
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
    }

    /// The config key at fault, when known.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Events per time unit as `num / den`. Also used for probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u64, u64)", into = "(u64, u64)")]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub const ZERO: Rate = Rate { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        Rate { num, den }
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

impl From<(u64, u64)> for Rate {
    fn from((num, den): (u64, u64)) -> Self {
        Rate { num, den }
    }
}

impl From<Rate> for (u64, u64) {
    fn from(r: Rate) -> Self {
        (r.num, r.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Topology {
    Complete,
    /// Each process talks to the `k` nearest processes on either side.
    Ring(u32),
    /// Process 0 is the hub.
    Star,
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "complete" => return Ok(Topology::Complete),
            "star" => return Ok(Topology::Star),
            "ring" => return Ok(Topology::Ring(1)),
            _ => {}
        }
        let k = s
            .strip_prefix("ring(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("ring:"))
            .ok_or_else(|| format!("unknown topology `{s}` (expected complete, star, ring or ring(k))"))?;
        k.trim().parse().map(Topology::Ring).map_err(|_| format!("bad ring neighbour count `{k}`"))
    }
}

impl TryFrom<String> for Topology {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Topology> for String {
    fn from(t: Topology) -> Self {
        t.to_string()
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Complete => f.write_str("complete"),
            Topology::Ring(k) => write!(f, "ring({k})"),
            Topology::Star => f.write_str("star"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashPlan {
    pub pid: ProcessId,
    pub time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FailurePlan {
    pub message_failure_probability: Rate,
    pub crashes: Vec<CrashPlan>,
}

impl Default for Rate {
    fn default() -> Self {
        Rate::ZERO
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub n_processes: u32,
    pub seed: u64,
    pub duration: u64,
    pub epoch_interval: u64,
    pub epsilon: u64,
    pub clock_mode: ClockMode,
    pub drift_ppm: u32,
    pub initial_skew_max: u64,
    pub local_event_rate: Rate,
    pub message_rate: Rate,
    pub latency_min: u64,
    pub latency_max: u64,
    pub topology: Topology,
    pub failure_plan: FailurePlan,
    pub poll_interval: u64,
    pub missed_polls_threshold: u32,
}

impl SimConfig {
    /// A small failure-free configuration; callers adjust fields from here.
    pub fn new(n_processes: u32, duration: u64, epoch_interval: u64, epsilon: u64) -> Self {
        SimConfig {
            n_processes,
            seed: 0,
            duration,
            epoch_interval,
            epsilon,
            clock_mode: ClockMode::Knowledge,
            drift_ppm: 0,
            initial_skew_max: 0,
            local_event_rate: Rate::new(1, 20),
            message_rate: Rate::new(1, 20),
            latency_min: 1,
            latency_max: 10,
            topology: Topology::Complete,
            failure_plan: FailurePlan::default(),
            poll_interval: 100,
            missed_polls_threshold: 3,
        }
    }

    /// Rejects unusable configurations and returns warnings for usable but
    /// questionable ones.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if self.n_processes == 0 {
            return Err(ConfigError::invalid("n_processes", "must be at least 1"));
        }
        if self.duration == 0 {
            return Err(ConfigError::invalid("duration", "must be at least 1"));
        }
        if self.epoch_interval == 0 {
            return Err(ConfigError::invalid("epoch_interval", "must be at least 1"));
        }
        if self.epsilon == 0 {
            return Err(ConfigError::invalid("epsilon", "must be at least 1"));
        }
        if self.drift_ppm >= 1_000_000 {
            return Err(ConfigError::invalid("drift_ppm", "must be below 1000000"));
        }
        for (key, rate) in [("local_event_rate", self.local_event_rate), ("message_rate", self.message_rate)] {
            if rate.den == 0 {
                return Err(ConfigError::invalid(key, "denominator must be at least 1"));
            }
        }
        let p = self.failure_plan.message_failure_probability;
        if p.den == 0 || p.num > p.den {
            return Err(ConfigError::invalid("message_failure_probability", "must be a fraction in [0, 1]"));
        }
        if self.latency_min > self.latency_max {
            return Err(ConfigError::invalid("latency_min", "must not exceed latency_max"));
        }
        if !self.message_rate.is_zero() && self.n_processes < 2 {
            return Err(ConfigError::invalid("message_rate", "messages need at least 2 processes"));
        }
        if let Topology::Ring(0) = self.topology {
            return Err(ConfigError::invalid("topology", "ring needs at least one neighbour"));
        }
        if self.poll_interval == 0 {
            return Err(ConfigError::invalid("poll_interval", "must be at least 1"));
        }
        if self.missed_polls_threshold == 0 {
            return Err(ConfigError::invalid("missed_polls_threshold", "must be at least 1"));
        }
        for c in &self.failure_plan.crashes {
            if c.pid >= self.n_processes {
                return Err(ConfigError::invalid("crash", format!("pid {} out of range", c.pid)));
            }
            if c.time > self.duration {
                return Err(ConfigError::invalid("crash", format!("time {} is after duration", c.time)));
            }
        }

        let mut warnings = Vec::new();
        let horizon = self.epsilon.saturating_mul(self.epoch_interval);
        if horizon <= self.initial_skew_max + self.latency_max {
            warnings.push(format!(
                "epsilon * epoch_interval = {horizon} does not exceed initial_skew_max + latency_max = {}",
                self.initial_skew_max + self.latency_max
            ));
        }
        Ok(warnings)
    }

    /// Smallest epsilon that can never cap an offset during this run.
    pub fn uncapped_epsilon(&self) -> u64 {
        let worst = self.initial_skew_max as u128
            + (self.duration as u128 + self.latency_max as u128) * (1_000_000 + self.drift_ppm as u128) / 1_000_000;
        (worst / self.epoch_interval as u128) as u64 + 2
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.into_config()
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.into_config()
    }

    /// Loads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ConfigFile::from(self)).expect("config serializes")
    }
}

/// On-disk form: flat keys, failure plan inlined.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n_processes: u32,
    #[serde(default)]
    seed: u64,
    duration: u64,
    epoch_interval: u64,
    epsilon: u64,
    #[serde(default)]
    clock_mode: ClockMode,
    #[serde(default)]
    drift_ppm: u32,
    #[serde(default)]
    initial_skew_max: u64,
    #[serde(default = "default_rate")]
    local_event_rate: Rate,
    #[serde(default = "default_rate")]
    message_rate: Rate,
    #[serde(default = "default_latency_min")]
    latency_min: u64,
    #[serde(default = "default_latency_max")]
    latency_max: u64,
    #[serde(default = "default_topology")]
    topology: Topology,
    #[serde(default)]
    message_failure_probability: Rate,
    #[serde(default)]
    crash: Vec<(ProcessId, u64)>,
    #[serde(default = "default_poll_interval")]
    poll_interval: u64,
    #[serde(default = "default_threshold")]
    missed_polls_threshold: u32,
}

fn default_rate() -> Rate {
    Rate::new(1, 20)
}
fn default_latency_min() -> u64 {
    1
}
fn default_latency_max() -> u64 {
    10
}
fn default_topology() -> Topology {
    Topology::Complete
}
fn default_poll_interval() -> u64 {
    100
}
fn default_threshold() -> u32 {
    3
}

impl ConfigFile {
    fn into_config(self) -> Result<SimConfig, ConfigError> {
        let config = SimConfig {
            n_processes: self.n_processes,
            seed: self.seed,
            duration: self.duration,
            epoch_interval: self.epoch_interval,
            epsilon: self.epsilon,
            clock_mode: self.clock_mode,
            drift_ppm: self.drift_ppm,
            initial_skew_max: self.initial_skew_max,
            local_event_rate: self.local_event_rate,
            message_rate: self.message_rate,
            latency_min: self.latency_min,
            latency_max: self.latency_max,
            topology: self.topology,
            failure_plan: FailurePlan {
                message_failure_probability: self.message_failure_probability,
                crashes: self.crash.into_iter().map(|(pid, time)| CrashPlan { pid, time }).collect(),
            },
            poll_interval: self.poll_interval,
            missed_polls_threshold: self.missed_polls_threshold,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<&SimConfig> for ConfigFile {
    fn from(c: &SimConfig) -> Self {
        ConfigFile {
            n_processes: c.n_processes,
            seed: c.seed,
            duration: c.duration,
            epoch_interval: c.epoch_interval,
            epsilon: c.epsilon,
            clock_mode: c.clock_mode,
            drift_ppm: c.drift_ppm,
            initial_skew_max: c.initial_skew_max,
            local_event_rate: c.local_event_rate,
            message_rate: c.message_rate,
            latency_min: c.latency_min,
            latency_max: c.latency_max,
            topology: c.topology,
            message_failure_probability: c.failure_plan.message_failure_probability,
            crash: c.failure_plan.crashes.iter().map(|c| (c.pid, c.time)).collect(),
            poll_interval: c.poll_interval,
            missed_polls_threshold: c.missed_polls_threshold,
        }
    }
}
