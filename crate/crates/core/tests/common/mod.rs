//! Oracles and fixtures shared by the integration test targets.
#![allow(dead_code)]

use mgsim::consensus::{consensus_rate, CommGraph, Edge};
use mgsim::dg::{dg_rates, frequency, DgParams, DgState, DqPair};
use mgsim::engine::{rk4_step, Rk4};
use mgsim::{Preset, Scenario};
use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen, Vector6};
use num_complex::Complex64;

pub fn preset(p: Preset) -> Scenario {
    p.document().resolve().expect("presets resolve").scenario
}

pub fn preset_with(p: Preset, edit: impl FnOnce(&mut Scenario)) -> Scenario {
    let mut s = preset(p);
    edit(&mut s);
    s
}

// ---------------------------------------------------------------------------
// LC filter + coupling inductor as an explicit linear system
// ---------------------------------------------------------------------------

/// `dx/dt = A x + b` with x = [i_ld, i_lq, v_od, v_oq, i_od, i_oq], written
/// out term by term from the circuit equations.
pub fn lcl_matrix(
    p: &DgParams,
    omega: f64,
    v_i: DqPair,
    v_b: DqPair,
) -> (Matrix6<f64>, Vector6<f64>) {
    let (lf, cf, lc) = (p.l_f, p.c_f, p.l_c);
    #[rustfmt::skip]
    let a = Matrix6::new(
        -p.r_f / lf, omega,       -1.0 / lf,  0.0,        0.0,         0.0,
        -omega,      -p.r_f / lf,  0.0,       -1.0 / lf,  0.0,         0.0,
        1.0 / cf,    0.0,          0.0,       omega,      -1.0 / cf,   0.0,
        0.0,         1.0 / cf,     -omega,    0.0,        0.0,         -1.0 / cf,
        0.0,         0.0,          1.0 / lc,  0.0,        -p.r_c / lc, omega,
        0.0,         0.0,          0.0,       1.0 / lc,   -omega,      -p.r_c / lc,
    );
    let b = Vector6::new(v_i.d / lf, v_i.q / lf, 0.0, 0.0, -v_b.d / lc, -v_b.q / lc);
    (a, b)
}

pub fn with_lcl(x: &Vector6<f64>) -> DgState {
    DgState {
        i_l: DqPair::new(x[0], x[1]),
        v_o: DqPair::new(x[2], x[3]),
        i_o: DqPair::new(x[4], x[5]),
        ..DgState::default()
    }
}

/// Sinusoidal steady state of the filter by phasor circuit analysis:
/// v_i --(r_f + jwL_f)-- v_o --(r_c + jwL_c)-- v_b, with jwC_f from v_o to ground.
pub fn lcl_phasor_steady_state(p: &DgParams, omega: f64, v_i: DqPair, v_b: DqPair) -> Vector6<f64> {
    let vi = Complex64::new(v_i.d, v_i.q);
    let vb = Complex64::new(v_b.d, v_b.q);
    let zf = Complex64::new(p.r_f, omega * p.l_f);
    let zc = Complex64::new(p.r_c, omega * p.l_c);
    let yc = Complex64::new(0.0, omega * p.c_f);
    let vo = (vi / zf + vb / zc) / (zf.inv() + zc.inv() + yc);
    let il = (vi - vo) / zf;
    let io = (vo - vb) / zc;
    Vector6::new(il.re, il.im, vo.re, vo.im, io.re, io.im)
}

// ---------------------------------------------------------------------------
// Single DG against a stiff bus: equilibrium by integration + Newton polish
// ---------------------------------------------------------------------------

/// Rates of one DG tied to a fixed bus voltage, with the common frame locked
/// to the DG itself (so delta stays put). Index 0 (delta) is excluded.
fn single_dg_residual(x: &[f64], v_b: DqPair, p: &DgParams) -> Vec<f64> {
    let s = DgState::from_slice(x);
    let r = dg_rates(&s, v_b, 0.0, frequency(&s, p), p);
    r.to_array()[1..].to_vec()
}

pub fn single_dg_equilibrium(v_b: DqPair, p: &DgParams) -> DgState {
    // Warm start: integrate from the nominal-voltage guess.
    let mut x = DgState {
        v_o: DqPair::new(p.v_n, 0.0),
        ..DgState::default()
    }
    .to_array()
    .to_vec();
    let dt = 2e-5;
    for k in 0..25_000 {
        x = rk4_step::<(), _>(
            |_, x, dx| {
                let s = DgState::from_slice(x);
                dg_rates(&s, v_b, 0.0, frequency(&s, p), p).write_to(dx);
                Ok(())
            },
            &x,
            k as f64 * dt,
            dt,
        )
        .unwrap();
    }
    // Newton on the 12 free components.
    for _ in 0..20 {
        let f = single_dg_residual(&x, v_b, p);
        if f.iter().all(|v| v.abs() < 1e-11) {
            break;
        }
        let mut jac = DMatrix::zeros(12, 12);
        for c in 0..12 {
            let mut xh = x.clone();
            let h = 1e-6 * x[c + 1].abs().max(1.0);
            xh[c + 1] += h;
            let fh = single_dg_residual(&xh, v_b, p);
            for r in 0..12 {
                jac[(r, c)] = (fh[r] - f[r]) / h;
            }
        }
        let step = jac
            .lu()
            .solve(&-DVector::from_vec(f))
            .expect("regular Jacobian");
        for c in 0..12 {
            x[c + 1] += step[c];
        }
    }
    DgState::from_slice(&x)
}

// ---------------------------------------------------------------------------
// RK4 order on the scalar test equation
// ---------------------------------------------------------------------------

pub fn rk4_scalar_error(lambda: f64, t_end: f64, steps: usize) -> f64 {
    let dt = t_end / steps as f64;
    let mut rk = Rk4::new(1);
    let mut x = [1.0];
    for k in 0..steps {
        rk.step::<(), _>(
            |_, x, dx| {
                dx[0] = lambda * x[0];
                Ok(())
            },
            k as f64 * dt,
            &mut x,
            dt,
        )
        .unwrap();
    }
    (x[0] - (lambda * t_end).exp()).abs()
}

/// Observed orders between successive halvings of the step.
pub fn rk4_observed_orders() -> Vec<f64> {
    let errs: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&n| rk4_scalar_error(-1.0, 1.0, n))
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

// ---------------------------------------------------------------------------
// Consensus on pure-integrator agents vs. the matrix exponential
// ---------------------------------------------------------------------------

pub fn three_agent_zone() -> CommGraph {
    mgsim::consensus::build_zonal_graph(
        3,
        &[vec![0, 1, 2]],
        &[0],
        &[Edge::both(0, 1), Edge::both(0, 2)],
        &[30.0; 3],
    )
    .unwrap()
}

/// Agents with v_i = v0_i + dv_i and dv_i' = consensus_rate, neighbours read
/// continuously. Returns the largest deviation from the closed form
/// `v(t) = v_ref + exp(-c (L+G) t) (v0 - v_ref)` over [0, t_end].
pub fn consensus_oracle_error(
    graph: &CommGraph,
    v0: &[f64],
    v_ref: f64,
    t_end: f64,
    dt: f64,
) -> f64 {
    let n = v0.len();
    let m = mgsim::consensus::pinned_laplacian(graph) * graph.coupling()[0];
    let eig = SymmetricEigen::new(m);
    let e0 = DVector::from_iterator(n, v0.iter().map(|v| v - v_ref));
    let exact = |t: f64| {
        let decay = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| (-l * t).exp()));
        let modal = eig.eigenvectors.transpose() * &e0;
        &eig.eigenvectors * modal.component_mul(&decay)
    };

    let steps = (t_end / dt).round() as usize;
    let mut rk = Rk4::new(n);
    let mut dv = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        rk.step::<(), _>(
            |_, dv, rate| {
                let v: Vec<f64> = (0..n).map(|i| v0[i] + dv[i]).collect();
                for i in 0..n {
                    rate[i] = consensus_rate(i, v[i], &v, graph, v_ref);
                }
                Ok(())
            },
            k as f64 * dt,
            &mut dv,
            dt,
        )
        .unwrap();
        let e = exact((k + 1) as f64 * dt);
        for i in 0..n {
            worst = worst.max((v0[i] + dv[i] - v_ref - e[i]).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Random networks
// ---------------------------------------------------------------------------

pub fn random_network(rng: &mut impl rand::Rng, buses: u32) -> mgsim::network::NetworkModel {
    use mgsim::network::{Line, Load, NetworkModel};
    let ids: Vec<u32> = (1..=buses).collect();
    let mut lines = Vec::new();
    // Spanning chain plus a few random chords.
    for k in 1..buses {
        let from = rng.gen_range(1..=k);
        lines.push(Line {
            from,
            to: k + 1,
            r: rng.gen_range(0.05..1.0),
            l: rng.gen_range(1e-4..1e-2),
        });
    }
    for _ in 0..2 {
        let a = rng.gen_range(1..=buses);
        let b = rng.gen_range(1..=buses);
        if a != b {
            lines.push(Line {
                from: a,
                to: b,
                r: rng.gen_range(0.05..1.0),
                l: rng.gen_range(1e-4..1e-2),
            });
        }
    }
    let mut load_buses: Vec<u32> = (2..=buses).filter(|_| rng.gen_bool(0.6)).collect();
    load_buses.insert(0, 1);
    let loads = load_buses
        .into_iter()
        .enumerate()
        .map(|(k, bus)| Load {
            id: format!("L{k}"),
            bus,
            r: rng.gen_range(5.0..50.0),
            l: rng.gen_range(0.0..2e-2),
            enabled: true,
        })
        .collect();
    NetworkModel {
        buses: ids.clone(),
        lines,
        loads,
        dg_buses: ids,
    }
}
