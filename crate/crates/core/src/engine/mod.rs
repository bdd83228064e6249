//! Coupled DG + network + secondary-control simulation.

mod equilibrium;
mod metrics;
mod rk4;
mod run;
mod system;

pub use equilibrium::{find_equilibrium, EquilibriumReport};
pub use metrics::{compare_runs, settling_time, Comparison, RunMetrics, SETTLING_FRACTION};
pub use rk4::{first_non_finite, rk4_step, Rk4};
pub use run::{run_scenario, DgChannels, TimeSeriesLog, CHANNELS};
pub use system::{System, STRIDE};

use crate::consensus::{CommGraph, SecondaryConfig};
use crate::dg::DgParams;
use crate::error::SimError;
use crate::network::{NetworkEvent, NetworkModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TimedEvent {
    pub t: f64,
    pub event: NetworkEvent,
}

/// Complete description of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub dg_params: Vec<DgParams>,
    pub network: NetworkModel,
    pub graph: CommGraph,
    pub secondary: SecondaryConfig,
    /// Sorted by time.
    pub events: Vec<TimedEvent>,
    pub t_end: f64,
    pub dt: f64,
    /// DG whose local frame is the common frame.
    pub common_frame_dg: usize,
    pub log_decimation: usize,
}

impl Scenario {
    pub fn dg_count(&self) -> usize {
        self.dg_params.len()
    }

    /// Frequency at which the network phasors are evaluated.
    pub fn omega_nom(&self) -> f64 {
        self.dg_params[self.common_frame_dg].omega_n
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.dg_params.is_empty() {
            return invalid("at least one DG is required".into());
        }
        for p in &self.dg_params {
            p.validate()?;
        }
        self.network.validate()?;
        let n = self.dg_count();
        if self.network.dg_buses.len() != n {
            return invalid(format!(
                "{} DG attachments for {} DGs",
                self.network.dg_buses.len(),
                n
            ));
        }
        if self.graph.len() != n {
            return invalid(format!(
                "communication graph has {} agents for {} DGs",
                self.graph.len(),
                n
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return invalid(format!("t_end must be > 0, got {}", self.t_end));
        }
        if self.common_frame_dg >= n {
            return invalid(format!(
                "common_frame_dg {} out of range",
                self.common_frame_dg
            ));
        }
        if self.log_decimation == 0 {
            return invalid("log_decimation must be >= 1".into());
        }
        let s = &self.secondary;
        if !(s.t_comm.is_finite() && s.t_comm > 0.0) {
            return invalid(format!("T_comm must be > 0, got {}", s.t_comm));
        }
        if !(s.t_activate.is_finite() && s.t_activate >= 0.0) {
            return invalid(format!("t_activate must be >= 0, got {}", s.t_activate));
        }
        if !s.v_ref.is_finite() {
            return invalid("v_ref must be finite".into());
        }
        if self.events.windows(2).any(|w| w[0].t > w[1].t) {
            return invalid("events must be sorted by time".into());
        }
        for e in &self.events {
            if !(e.t.is_finite() && e.t >= 0.0) {
                return invalid(format!("event time must be >= 0, got {}", e.t));
            }
            if self.network.load(&e.event.load).is_none() {
                return Err(crate::error::NetworkError::UnknownLoad(e.event.load.clone()).into());
            }
        }
        Ok(())
    }

    /// Number of integration steps covering `[0, t_end]`.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt * (1.0 + 1e-12)).floor() as usize
    }
}
