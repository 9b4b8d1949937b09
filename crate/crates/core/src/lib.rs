//! Causality tracing built on sparse hybrid vector clocks.
//!
//! - [`clock`]: clock values with advance, merge and causal comparison.
//! - [`trace`]: the JSON Lines trace record format and log reading.
//! - [`sim`]: deterministic multi-process simulator with failure injection
//!   and a ground-truth event DAG.
//! - [`order`]: causal ordering, swimlane models, isolation and failure reports.
//! - [`verify`]: checks recorded clocks against a simulator's event DAG.

pub mod clock;
pub mod order;
pub mod sim;
pub mod trace;
pub mod verify;

pub use clock::{ActiveSize, CausalRelation, ClockError, ClockMode, HybridVectorClock, Knowledge, ProcessId};
pub use trace::{EventType, TraceRecord};
