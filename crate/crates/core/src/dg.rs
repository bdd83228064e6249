//! Voltage-controlled voltage-source inverter in its own rotating dq frame.
//!
//! One DG is a cascade of power calculation, first-order power filter, droop
//! law, PI voltage loop, PI current loop and the LC filter plus coupling
//! inductor. The inverter itself is an ideal average model, so the bridge
//! voltage equals the current-loop output.
//!
//! Each DG runs in a local frame rotating at its own droop frequency. The
//! network lives in a common frame; `delta` is the angle of the local frame
//! relative to the common one.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::ModelError;

/// Direct/quadrature pair. Volts or amperes depending on context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

impl DqPair {
    pub const ZERO: Self = Self { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl std::ops::Sub for DqPair {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl std::ops::Add for DqPair {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.d + rhs.d, self.q + rhs.q)
    }
}

/// Per-inverter constants. Defaults are the shared test-system values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgParams {
    /// Filter resistance, ohms.
    pub r_f: f64,
    /// Filter inductance, henries.
    pub l_f: f64,
    /// Filter capacitance, farads.
    pub c_f: f64,
    /// Coupling resistance, ohms.
    pub r_c: f64,
    /// Coupling inductance, henries.
    pub l_c: f64,
    /// Power low-pass cutoff, rad/s.
    pub omega_c: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    /// Output-current feed-forward gain in the voltage loop.
    pub feedforward: f64,
    /// Frequency droop gain, rad/s per watt.
    pub m_p: f64,
    /// Voltage droop gain, volts per var.
    pub n_q: f64,
    /// Nominal angular frequency, rad/s.
    pub omega_n: f64,
    /// Nominal voltage set-point, volts.
    pub v_n: f64,
}

impl Default for DgParams {
    fn default() -> Self {
        Self {
            r_f: 0.1,
            l_f: 1.35e-3,
            c_f: 50e-6,
            r_c: 0.03,
            l_c: 0.35e-3,
            omega_c: 31.41,
            k_pv: 0.05,
            k_iv: 390.0,
            k_pc: 10.5,
            k_ic: 16e3,
            feedforward: 0.75,
            m_p: 9.4e-5,
            n_q: 1.3e-3,
            omega_n: 2.0 * PI * 60.0,
            v_n: 381.0,
        }
    }
}

impl DgParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("r_f", self.r_f),
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("r_c", self.r_c),
            ("l_c", self.l_c),
            ("omega_c", self.omega_c),
            ("omega_n", self.omega_n),
            ("v_n", self.v_n),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParam {
                    name,
                    constraint: "finite and > 0",
                    value,
                });
            }
        }
        let nonnegative = [
            ("k_pv", self.k_pv),
            ("k_iv", self.k_iv),
            ("k_pc", self.k_pc),
            ("k_ic", self.k_ic),
            ("m_p", self.m_p),
            ("n_q", self.n_q),
        ];
        for (name, value) in nonnegative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParam {
                    name,
                    constraint: "finite and >= 0",
                    value,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.feedforward) {
            return Err(ModelError::InvalidParam {
                name: "feedforward",
                constraint: "in [0, 1]",
                value: self.feedforward,
            });
        }
        Ok(())
    }
}

/// The 13 dynamic states of one inverter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DgState {
    /// Local frame angle relative to the common frame, radians. Kept unwrapped.
    pub delta: f64,
    /// Filtered active power, W.
    pub p: f64,
    /// Filtered reactive power delivered, var. Positive into inductive loads.
    pub q: f64,
    pub phi: DqPair,
    pub gamma: DqPair,
    pub i_l: DqPair,
    pub v_o: DqPair,
    pub i_o: DqPair,
}

impl DgState {
    pub const LEN: usize = 13;

    /// Component names in the order used by [`DgState::to_array`].
    pub const NAMES: [&'static str; Self::LEN] = [
        "delta", "P", "Q", "phi_d", "phi_q", "gamma_d", "gamma_q", "i_ld", "i_lq", "v_od", "v_oq",
        "i_od", "i_oq",
    ];

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.delta,
            self.p,
            self.q,
            self.phi.d,
            self.phi.q,
            self.gamma.d,
            self.gamma.q,
            self.i_l.d,
            self.i_l.q,
            self.v_o.d,
            self.v_o.q,
            self.i_o.d,
            self.i_o.q,
        ]
    }

    /// Reads the first 13 entries of `x`.
    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            p: x[1],
            q: x[2],
            phi: DqPair::new(x[3], x[4]),
            gamma: DqPair::new(x[5], x[6]),
            i_l: DqPair::new(x[7], x[8]),
            v_o: DqPair::new(x[9], x[10]),
            i_o: DqPair::new(x[11], x[12]),
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..Self::LEN].copy_from_slice(&self.to_array());
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Instantaneous active and reactive power from output voltage and current.
///
/// With the q axis leading d (the convention of [`lcl_rates`]), `q` comes out
/// negative when the current lags the voltage. [`dg_rates`] negates it before
/// filtering so that the Q-V droop sees delivered reactive power.
pub fn instantaneous_power(v_o: DqPair, i_o: DqPair) -> (f64, f64) {
    let p = v_o.d * i_o.d + v_o.q * i_o.q;
    let q = v_o.d * i_o.q - v_o.q * i_o.d;
    (p, q)
}

/// Rate of the first-order power filter. Used for both P and Q.
pub fn power_filter_rate(p_inst: f64, p_filtered: f64, omega_c: f64) -> f64 {
    omega_c * (p_inst - p_filtered)
}

/// Output of the droop stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DroopSetpoints {
    pub omega: f64,
    pub v_star: DqPair,
}

/// Frequency and voltage droop. `dv_n` is the secondary correction added to
/// the nominal voltage set-point.
pub fn droop_setpoints(p: f64, q: f64, dv_n: f64, params: &DgParams) -> DroopSetpoints {
    DroopSetpoints {
        omega: params.omega_n - params.m_p * p,
        v_star: DqPair::new((params.v_n + dv_n) - params.n_q * q, 0.0),
    }
}

/// Droop gains from the allowed deviations and the source rating.
pub fn droop_gains(
    d_omega_max: f64,
    p_max: f64,
    dv_max: f64,
    q_max: f64,
) -> Result<(f64, f64), ModelError> {
    if !(p_max > 0.0) {
        return Err(ModelError::NonPositiveRating {
            name: "p_max",
            value: p_max,
        });
    }
    if !(q_max > 0.0) {
        return Err(ModelError::NonPositiveRating {
            name: "q_max",
            value: q_max,
        });
    }
    Ok((d_omega_max / p_max, dv_max / q_max))
}

/// PI voltage loop with output-current feed-forward and capacitor decoupling.
/// Returns the inductor current reference and the integrator rate.
pub fn voltage_controller(
    v_star: DqPair,
    v_o: DqPair,
    i_o: DqPair,
    phi: DqPair,
    params: &DgParams,
) -> (DqPair, DqPair) {
    let dphi = v_star - v_o;
    let wc = params.omega_n * params.c_f;
    let i_l_star = DqPair::new(
        params.feedforward * i_o.d - wc * v_o.q + params.k_pv * dphi.d + params.k_iv * phi.d,
        params.feedforward * i_o.q + wc * v_o.d + params.k_pv * dphi.q + params.k_iv * phi.q,
    );
    (i_l_star, dphi)
}

/// PI current loop with inductor decoupling. Returns the bridge voltage
/// reference and the integrator rate.
pub fn current_controller(
    i_l_star: DqPair,
    i_l: DqPair,
    gamma: DqPair,
    params: &DgParams,
) -> (DqPair, DqPair) {
    let dgamma = i_l_star - i_l;
    let wl = params.omega_n * params.l_f;
    let v_i_star = DqPair::new(
        -wl * i_l.q + params.k_pc * dgamma.d + params.k_ic * gamma.d,
        wl * i_l.d + params.k_pc * dgamma.q + params.k_ic * gamma.q,
    );
    (v_i_star, dgamma)
}

/// Time derivatives of the filter inductor current, capacitor voltage and
/// coupling inductor current.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LclRates {
    pub di_l: DqPair,
    pub dv_o: DqPair,
    pub di_o: DqPair,
}

/// LC filter and coupling inductor, all quantities in the DG's local frame.
/// `v_b` is the bus voltage seen at the far side of the coupling inductor.
pub fn lcl_rates(
    state: &DgState,
    v_i: DqPair,
    v_b: DqPair,
    omega: f64,
    params: &DgParams,
) -> LclRates {
    let DgState { i_l, v_o, i_o, .. } = *state;
    let rf_lf = params.r_f / params.l_f;
    let rc_lc = params.r_c / params.l_c;
    LclRates {
        di_l: DqPair::new(
            -rf_lf * i_l.d + omega * i_l.q + (v_i.d - v_o.d) / params.l_f,
            -rf_lf * i_l.q - omega * i_l.d + (v_i.q - v_o.q) / params.l_f,
        ),
        dv_o: DqPair::new(
            omega * v_o.q + (i_l.d - i_o.d) / params.c_f,
            -omega * v_o.d + (i_l.q - i_o.q) / params.c_f,
        ),
        di_o: DqPair::new(
            -rc_lc * i_o.d + omega * i_o.q + (v_o.d - v_b.d) / params.l_c,
            -rc_lc * i_o.q - omega * i_o.d + (v_o.q - v_b.q) / params.l_c,
        ),
    }
}

/// Rotates a local-frame quantity by `+delta` into the common frame.
pub fn frame_to_common(x: DqPair, delta: f64) -> DqPair {
    let (s, c) = delta.sin_cos();
    DqPair::new(c * x.d - s * x.q, s * x.d + c * x.q)
}

/// Rotates a common-frame quantity by `-delta` into the local frame.
pub fn frame_to_local(x: DqPair, delta: f64) -> DqPair {
    let (s, c) = delta.sin_cos();
    DqPair::new(c * x.d + s * x.q, -s * x.d + c * x.q)
}

/// Full state derivative of one DG given its bus voltage in the common frame.
pub fn dg_rates(
    state: &DgState,
    v_b_common: DqPair,
    dv_n: f64,
    omega_com: f64,
    params: &DgParams,
) -> DgState {
    let v_b = frame_to_local(v_b_common, state.delta);
    let (p_inst, q_inst) = instantaneous_power(state.v_o, state.i_o);
    let droop = droop_setpoints(state.p, state.q, dv_n, params);
    let (i_l_star, dphi) =
        voltage_controller(droop.v_star, state.v_o, state.i_o, state.phi, params);
    let (v_i_star, dgamma) = current_controller(i_l_star, state.i_l, state.gamma, params);
    let lcl = lcl_rates(state, v_i_star, v_b, droop.omega, params);
    DgState {
        delta: droop.omega - omega_com,
        p: power_filter_rate(p_inst, state.p, params.omega_c),
        // Delivered reactive power; see `instantaneous_power`.
        q: power_filter_rate(-q_inst, state.q, params.omega_c),
        phi: dphi,
        gamma: dgamma,
        i_l: lcl.di_l,
        v_o: lcl.dv_o,
        i_o: lcl.di_o,
    }
}

/// Angular frequency of the DG's local frame.
pub fn frequency(state: &DgState, params: &DgParams) -> f64 {
    params.omega_n - params.m_p * state.p
}
