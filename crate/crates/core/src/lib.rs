//! Admission control and placement of parallel advance-reservation (AR) jobs
//! with deadlines on a homogeneous multiprocessor.
//!
//! The crate is organised bottom-up:
//!
//! - [`pes`]: processing-element ids, PE sets and the cluster shape.
//! - [`availability`]: the slot-record calendar with its add, delete and
//!   search operations.
//! - [`policies`]: the seven rectangle-selection policies.
//! - [`workload`]: synthetic request generation and SWF trace ingestion.
//! - [`simengine`]: the deterministic discrete-event admission loop.
//! - [`metrics`]: acceptance rate, slowdown and confidence intervals.
//! - [`oracle`]: a brute-force dense timeline used to cross-check the calendar.

pub mod availability;
pub mod metrics;
pub mod oracle;
pub mod pes;
pub mod policies;
pub mod simengine;
pub mod workload;

/// Simulation time in integer seconds.
pub type Time = u64;

pub use availability::{AvailabilityCalendar, AvailabilityRectangle, CalendarError, EndTime, Placement, SlotRecord};
pub use metrics::{confidence_interval, summarize, RunSummary};
pub use pes::{ClusterConfig, PeId, PeSet};
pub use policies::Policy;
pub use simengine::{run, JobOutcome};
pub use workload::{generate, ArRequest, WorkloadConfig};
