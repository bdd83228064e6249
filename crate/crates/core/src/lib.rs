//! Islanded inverter-based microgrid simulator with distributed, zonally
//! partitioned secondary voltage control.
//!
//! - [`dg`]: per-inverter droop, voltage/current loops and LCL filter.
//! - [`network`]: quasi-static bus voltage solve and load events.
//! - [`consensus`]: leader-follower voltage consensus over a zoned graph.
//! - [`engine`]: equilibrium, RK4 integration, logging and run metrics.
//! - [`scenario`]: JSON scenario documents and the two bundled presets.

pub mod consensus;
pub mod dg;
pub mod engine;
pub mod error;
pub mod network;
pub mod output;
pub mod scenario;

pub use engine::{run_scenario, RunMetrics, Scenario, TimeSeriesLog};
pub use scenario::{parse_scenario, Preset, ScenarioFile};
