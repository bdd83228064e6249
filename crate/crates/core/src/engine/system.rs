use nalgebra::DVector;
use num_complex::Complex64;

use super::Scenario;
use crate::consensus::{consensus_rate, CommGraph};
use crate::dg::{dg_rates, frame_to_common, frequency, DgParams, DgState, DqPair};
use crate::error::{NetworkError, SimError};
use crate::network::{BusSolver, NetworkModel};

/// State entries per DG: the 13 inverter states followed by `dv_n`.
pub const STRIDE: usize = DgState::LEN + 1;
const DV_N: usize = DgState::LEN;

/// Flat state vector layout and rate function of the whole microgrid.
#[derive(Clone, Debug)]
pub struct System {
    params: Vec<DgParams>,
    solver: BusSolver,
    graph: CommGraph,
    v_ref: f64,
    common: usize,
    omega_nom: f64,
    rhs: DVector<Complex64>,
    injections: DVector<Complex64>,
    max_kcl_residual: f64,
    max_power_residual: f64,
}

impl System {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let omega_nom = scenario.omega_nom();
        let solver = BusSolver::new(&scenario.network, omega_nom)?;
        let buses = solver.bus_count();
        Ok(Self {
            params: scenario.dg_params.clone(),
            solver,
            graph: scenario.graph.clone(),
            v_ref: scenario.secondary.v_ref,
            common: scenario.common_frame_dg,
            omega_nom,
            rhs: DVector::zeros(buses),
            injections: DVector::zeros(buses),
            max_kcl_residual: 0.0,
            max_power_residual: 0.0,
        })
    }

    /// Refactorises after a topology or load change.
    pub fn set_network(&mut self, net: &NetworkModel) -> Result<(), NetworkError> {
        self.solver = BusSolver::new(net, self.omega_nom)?;
        Ok(())
    }

    pub fn dg_count(&self) -> usize {
        self.params.len()
    }

    pub fn len(&self) -> usize {
        self.params.len() * STRIDE
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[DgParams] {
        &self.params
    }

    pub fn common_frame_dg(&self) -> usize {
        self.common
    }

    pub fn solver(&self) -> &BusSolver {
        &self.solver
    }

    pub fn dg_state(x: &[f64], k: usize) -> DgState {
        DgState::from_slice(&x[k * STRIDE..])
    }

    pub fn dv_n(x: &[f64], k: usize) -> f64 {
        x[k * STRIDE + DV_N]
    }

    pub fn dv_n_index(k: usize) -> usize {
        k * STRIDE + DV_N
    }

    pub fn v_od(x: &[f64], k: usize) -> f64 {
        x[k * STRIDE + 9]
    }

    /// Human-readable name of a flat state index, e.g. `dg3_v_od`.
    pub fn channel_name(index: usize) -> String {
        let (k, c) = (index / STRIDE, index % STRIDE);
        let name = if c == DV_N { "dv_n" } else { DgState::NAMES[c] };
        format!("dg{}_{}", k + 1, name)
    }

    /// Largest KCL residual seen by any network solve so far.
    pub fn max_kcl_residual(&self) -> f64 {
        self.max_kcl_residual
    }

    /// Largest complex-power balance residual seen so far.
    pub fn max_power_residual(&self) -> f64 {
        self.max_power_residual
    }

    /// Solves the network for the DG output currents in `x`; leaves bus
    /// voltages in `self.rhs`.
    fn solve_network(&mut self, x: &[f64]) -> Result<(), NetworkError> {
        self.rhs.fill(Complex64::new(0.0, 0.0));
        for (k, &bus) in self.solver.dg_bus().iter().enumerate() {
            let s = Self::dg_state(x, k);
            let i = frame_to_common(s.i_o, s.delta);
            self.rhs[bus] += Complex64::new(i.d, i.q);
        }
        self.injections.copy_from(&self.rhs);
        self.solver.solve_in_place(&mut self.rhs)?;
        if self
            .injections
            .iter()
            .any(|c| *c != Complex64::new(0.0, 0.0))
        {
            let kcl = self.solver.kcl_residual(&self.rhs, &self.injections);
            let power = self
                .solver
                .power_balance_residual(&self.rhs, &self.injections);
            self.max_kcl_residual = self.max_kcl_residual.max(kcl);
            self.max_power_residual = self.max_power_residual.max(power);
        }
        Ok(())
    }

    /// Common-frame bus voltages for the state `x`.
    pub fn bus_voltages(&mut self, x: &[f64]) -> Result<Vec<DqPair>, NetworkError> {
        self.solve_network(x)?;
        Ok(self.rhs.iter().map(|c| DqPair::new(c.re, c.im)).collect())
    }

    /// Writes `dx/dt`. `received` holds the last sampled voltages when the
    /// secondary layer is active; `None` freezes every `dv_n`.
    pub fn rates(
        &mut self,
        x: &[f64],
        dx: &mut [f64],
        received: Option<&[f64]>,
    ) -> Result<(), NetworkError> {
        self.solve_network(x)?;
        let omega_com = frequency(&Self::dg_state(x, self.common), &self.params[self.common]);
        for k in 0..self.params.len() {
            let state = Self::dg_state(x, k);
            let v_b = self.rhs[self.solver.dg_bus()[k]];
            let r = dg_rates(
                &state,
                DqPair::new(v_b.re, v_b.im),
                Self::dv_n(x, k),
                omega_com,
                &self.params[k],
            );
            let base = k * STRIDE;
            r.write_to(&mut dx[base..]);
            dx[base + DV_N] = match received {
                Some(held) => consensus_rate(k, state.v_o.d, held, &self.graph, self.v_ref),
                None => 0.0,
            };
        }
        Ok(())
    }
}
