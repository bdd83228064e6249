//! Droop operating point used as the initial condition.
//!
//! Newton iteration on the composed rate function with a forward-difference
//! Jacobian. The common-frame DG's angle is fixed at zero (its rate is
//! identically zero) and every `dv_n` is held at zero. The starting guess
//! treats each DG as an ideal source at its nominal voltage behind its
//! coupling impedance and back-fills the controller states from the
//! steady-state conditions. If Newton fails from there, the system is
//! integrated for a while with secondary control off and Newton is retried.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::rk4::Rk4;
use super::system::{System, STRIDE};
use super::Scenario;
use crate::dg::{instantaneous_power, DgState, DqPair};
use crate::error::{NetworkError, SimError};

/// Target for the infinity norm of the rate vector.
pub const RESIDUAL_TOL: f64 = 1e-9;
const MAX_NEWTON: usize = 100;
const WARMUP_SECONDS: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct EquilibriumReport {
    pub state: Vec<f64>,
    /// Infinity norm of the rate vector at `state`.
    pub residual: f64,
    pub iterations: usize,
    /// True when the flat start failed and the warm-up fallback was used.
    pub warm_started: bool,
}

pub fn find_equilibrium(scenario: &Scenario) -> Result<EquilibriumReport, SimError> {
    let mut sys = System::new(scenario)?;
    let guess = flat_start(&sys)?;
    match newton(&mut sys, guess.clone()) {
        Ok((state, residual, iterations)) => Ok(EquilibriumReport {
            state,
            residual,
            iterations,
            warm_started: false,
        }),
        Err(_) => {
            let mut x = guess;
            let mut rk = Rk4::new(x.len());
            let steps = (WARMUP_SECONDS / scenario.dt).ceil() as usize;
            for k in 0..steps {
                rk.step(
                    |_, x, dx| sys.rates(x, dx, None),
                    k as f64 * scenario.dt,
                    &mut x,
                    scenario.dt,
                )?;
                if let Some(i) = super::first_non_finite(&x) {
                    return Err(SimError::NonFinite {
                        channel: System::channel_name(i),
                        t: (k + 1) as f64 * scenario.dt,
                    });
                }
            }
            let (state, residual, iterations) = newton(&mut sys, x)?;
            Ok(EquilibriumReport {
                state,
                residual,
                iterations,
                warm_started: true,
            })
        }
    }
}

fn flat_start(sys: &System) -> Result<Vec<f64>, SimError> {
    let solver = sys.solver();
    let params = sys.params();
    let omega = params[sys.common_frame_dg()].omega_n;

    // Ideal sources behind the coupling impedance.
    let mut y = solver.admittance().clone();
    let mut rhs = DVector::from_element(solver.bus_count(), Complex64::new(0.0, 0.0));
    let mut y_c = Vec::with_capacity(params.len());
    for (k, p) in params.iter().enumerate() {
        let yc = Complex64::new(p.r_c, omega * p.l_c).inv();
        let b = solver.dg_bus()[k];
        y[(b, b)] += yc;
        rhs[b] += yc * p.v_n;
        y_c.push(yc);
    }
    if !y.lu().solve_mut(&mut rhs) {
        return Err(NetworkError::Singular {
            condition: f64::INFINITY,
        }
        .into());
    }

    let mut x = vec![0.0; sys.len()];
    for (k, p) in params.iter().enumerate() {
        let v_o = DqPair::new(p.v_n, 0.0);
        let i = y_c[k] * (Complex64::new(p.v_n, 0.0) - rhs[solver.dg_bus()[k]]);
        let i_o = DqPair::new(i.re, i.im);
        let (pw, q) = instantaneous_power(v_o, i_o);
        let q = -q;
        let w = p.omega_n - p.m_p * pw;
        let i_l = DqPair::new(i_o.d - w * p.c_f * v_o.q, i_o.q + w * p.c_f * v_o.d);
        let phi = if p.k_iv > 0.0 {
            DqPair::new(
                (i_l.d - p.feedforward * i_o.d + p.omega_n * p.c_f * v_o.q) / p.k_iv,
                (i_l.q - p.feedforward * i_o.q - p.omega_n * p.c_f * v_o.d) / p.k_iv,
            )
        } else {
            DqPair::ZERO
        };
        let v_i = DqPair::new(
            p.r_f * i_l.d - w * p.l_f * i_l.q + v_o.d,
            p.r_f * i_l.q + w * p.l_f * i_l.d + v_o.q,
        );
        let gamma = if p.k_ic > 0.0 {
            DqPair::new(
                (v_i.d + p.omega_n * p.l_f * i_l.q) / p.k_ic,
                (v_i.q - p.omega_n * p.l_f * i_l.d) / p.k_ic,
            )
        } else {
            DqPair::ZERO
        };
        DgState {
            delta: 0.0,
            p: pw,
            q,
            phi,
            gamma,
            i_l,
            v_o,
            i_o,
        }
        .write_to(&mut x[k * STRIDE..]);
    }
    Ok(x)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn worst_channel(v: &[f64], free: &[usize]) -> String {
    let (j, _) =
        v.iter().enumerate().fold(
            (0, 0.0),
            |(bj, bm), (j, x)| if x.abs() > bm { (j, x.abs()) } else { (bj, bm) },
        );
    System::channel_name(free[j])
}

fn newton(sys: &mut System, mut x: Vec<f64>) -> Result<(Vec<f64>, f64, usize), SimError> {
    let n = x.len();
    let delta_com = sys.common_frame_dg() * STRIDE;
    let free: Vec<usize> = (0..n)
        .filter(|&i| i != delta_com && i % STRIDE != STRIDE - 1)
        .collect();
    let m = free.len();
    let mut dx = vec![0.0; n];

    let residual = |sys: &mut System, x: &[f64], dx: &mut [f64]| -> Result<Vec<f64>, SimError> {
        sys.rates(x, dx, None)?;
        Ok(free.iter().map(|&i| dx[i]).collect())
    };

    let mut f = residual(sys, &x, &mut dx)?;
    for iter in 0..MAX_NEWTON {
        let norm = inf_norm(&f);
        if norm < RESIDUAL_TOL {
            return Ok((x, norm, iter));
        }
        let mut jac = DMatrix::zeros(m, m);
        for (c, &i) in free.iter().enumerate() {
            let h = 1e-7 * x[i].abs().max(1.0);
            let saved = x[i];
            x[i] = saved + h;
            let fh = residual(sys, &x, &mut dx)?;
            x[i] = saved;
            for r in 0..m {
                jac[(r, c)] = (fh[r] - f[r]) / h;
            }
        }
        let rhs = -DVector::from_vec(f.clone());
        let step = jac.lu().solve(&rhs).ok_or_else(|| SimError::Equilibrium {
            iterations: iter,
            residual: norm,
            channel: "singular Jacobian".into(),
        })?;

        let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let base = norm2(&f);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = x.clone();
            for (c, &i) in free.iter().enumerate() {
                trial[i] += alpha * step[c];
            }
            if let Ok(ft) = residual(sys, &trial, &mut dx) {
                if ft.iter().all(|v| v.is_finite()) && norm2(&ft) < (1.0 - 1e-4 * alpha) * base {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            let norm = inf_norm(&f);
            if norm < 10.0 * RESIDUAL_TOL {
                // Stalled at round-off level.
                return Ok((x, norm, iter));
            }
            return Err(SimError::Equilibrium {
                iterations: iter,
                residual: norm,
                channel: worst_channel(&f, &free),
            });
        }
    }
    let norm = inf_norm(&f);
    if norm < RESIDUAL_TOL {
        Ok((x, norm, MAX_NEWTON))
    } else {
        Err(SimError::Equilibrium {
            iterations: MAX_NEWTON,
            residual: norm,
            channel: worst_channel(&f, &free),
        })
    }
}
