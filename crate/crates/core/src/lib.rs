//! Consensus-based longitudinal control for a connected follower vehicle with
//! gains scheduled from an offline lookup table.
//!
//! - [`vehicle`]: double-integrator dynamics and delayed state history
//! - [`controller`]: consensus law and linear feedback baseline
//! - [`metrics`]: safety / convergence / comfort constraints
//! - [`table`]: offline gain-table build, nearest-cell lookup, persistence
//! - [`stability`]: coupling-gain bound and string-stability sweep
//! - [`harness`]: scenarios, comparison suite, CSV output

pub mod controller;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod sim;
pub mod stability;
pub mod table;
pub mod vehicle;

pub use controller::{ControllerInput, GainPair, LinearFeedbackGains};
pub use error::{Error, Result};
pub use metrics::{ComfortWeights, ConsensusThresholds, RunMetrics, SafetyMode};
pub use sim::{BuildConfig, InitialCondition};
pub use table::{build_table, AxisGrid, CandidateSets, GainTable, Parallelism, TableAxes};
