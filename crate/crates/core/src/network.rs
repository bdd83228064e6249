//! Quasi-static phasor network at nominal frequency.
//!
//! Lines and loads are series RL branches evaluated at the nominal angular
//! frequency. DG coupling-inductor currents enter as injections at their
//! attachment buses; load buses without a DG receive no injection. A common
//! frame dq pair `(d, q)` maps to the phasor `d + j q`.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dg::DqPair;
use crate::error::NetworkError;

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: u32,
    pub to: u32,
    /// Series resistance, ohms.
    pub r: f64,
    /// Series inductance, henries.
    pub l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: String,
    pub bus: u32,
    pub r: f64,
    pub l: f64,
    pub enabled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub buses: Vec<u32>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    /// Attachment bus of each DG, indexed by DG.
    pub dg_buses: Vec<u32>,
}

/// Change applied to a single load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum LoadAction {
    Toggle,
    SetEnabled { enabled: bool },
    ScaleImpedance { factor: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkEvent {
    pub load: String,
    pub action: LoadAction,
}

fn impedance(r: f64, l: f64, omega: f64) -> Complex64 {
    Complex64::new(r, omega * l)
}

impl NetworkModel {
    fn bus_index(&self) -> Result<HashMap<u32, usize>, NetworkError> {
        let mut index = HashMap::with_capacity(self.buses.len());
        for (k, &id) in self.buses.iter().enumerate() {
            if index.insert(id, k).is_some() {
                return Err(NetworkError::DuplicateBus(id));
            }
        }
        Ok(index)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.buses.is_empty() {
            return Err(NetworkError::Empty);
        }
        let index = self.bus_index()?;
        let lookup = |id: u32| index.get(&id).copied().ok_or(NetworkError::UnknownBus(id));

        let mut adjacency = vec![Vec::new(); self.buses.len()];
        for (k, line) in self.lines.iter().enumerate() {
            let a = lookup(line.from)?;
            let b = lookup(line.to)?;
            let name = format!("line {k} ({}-{})", line.from, line.to);
            if a == b {
                return Err(NetworkError::InvalidElement {
                    element: name,
                    constraint: "endpoints must differ",
                    value: line.from as f64,
                });
            }
            if !(line.r.is_finite() && line.r > 0.0) {
                return Err(NetworkError::InvalidElement {
                    element: name,
                    constraint: "resistance must be > 0",
                    value: line.r,
                });
            }
            if !(line.l.is_finite() && line.l >= 0.0) {
                return Err(NetworkError::InvalidElement {
                    element: name,
                    constraint: "inductance must be >= 0",
                    value: line.l,
                });
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }

        let mut ids = HashSet::new();
        for load in &self.loads {
            lookup(load.bus)?;
            if !ids.insert(load.id.as_str()) {
                return Err(NetworkError::DuplicateLoad(load.id.clone()));
            }
            let name = format!("load {}", load.id);
            if !(load.r.is_finite() && load.r > 0.0) {
                return Err(NetworkError::InvalidElement {
                    element: name,
                    constraint: "resistance must be > 0",
                    value: load.r,
                });
            }
            if !(load.l.is_finite() && load.l >= 0.0) {
                return Err(NetworkError::InvalidElement {
                    element: name,
                    constraint: "inductance must be >= 0",
                    value: load.l,
                });
            }
        }
        for &bus in &self.dg_buses {
            lookup(bus)?;
        }

        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &j in &adjacency[k] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Disconnected(self.buses[0], self.buses[k]));
        }
        Ok(())
    }

    pub fn load(&self, id: &str) -> Option<&Load> {
        self.loads.iter().find(|l| l.id == id)
    }
}

/// Returns a copy of `net` with the event applied. The admittance matrix has
/// to be rebuilt by the caller.
pub fn apply_event(net: &NetworkModel, event: &NetworkEvent) -> Result<NetworkModel, NetworkError> {
    let mut out = net.clone();
    let load = out
        .loads
        .iter_mut()
        .find(|l| l.id == event.load)
        .ok_or_else(|| NetworkError::UnknownLoad(event.load.clone()))?;
    match event.action {
        LoadAction::Toggle => load.enabled = !load.enabled,
        LoadAction::SetEnabled { enabled } => load.enabled = enabled,
        LoadAction::ScaleImpedance { factor } => {
            if !(factor.is_finite() && factor > 0.0) {
                return Err(NetworkError::InvalidElement {
                    element: format!("scale factor for load {}", event.load),
                    constraint: "must be > 0",
                    value: factor,
                });
            }
            load.r *= factor;
            load.l *= factor;
        }
    }
    Ok(out)
}

/// Ratio of extreme singular values.
pub fn condition_estimate(y: &DMatrix<Complex64>) -> f64 {
    let sv = y.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Nodal admittance matrix, rows ordered as `net.buses`. A network without
/// any enabled load assembles to a singular matrix; that is rejected when the
/// matrix is factorised in [`BusSolver::new`].
pub fn build_admittance(
    net: &NetworkModel,
    omega_nom: f64,
) -> Result<DMatrix<Complex64>, NetworkError> {
    net.validate()?;
    let index = net.bus_index()?;
    let n = net.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for line in &net.lines {
        let (a, b) = (index[&line.from], index[&line.to]);
        let ys = impedance(line.r, line.l, omega_nom).inv();
        y[(a, a)] += ys;
        y[(b, b)] += ys;
        y[(a, b)] -= ys;
        y[(b, a)] -= ys;
    }
    for load in net.loads.iter().filter(|l| l.enabled) {
        let k = index[&load.bus];
        y[(k, k)] += impedance(load.r, load.l, omega_nom).inv();
    }
    Ok(y)
}

/// Factorised network ready for repeated bus-voltage solves.
#[derive(Clone, Debug)]
pub struct BusSolver {
    y: DMatrix<Complex64>,
    lu: LU<Complex64, Dyn, Dyn>,
    dg_bus: Vec<usize>,
    shunts: Vec<(usize, Complex64)>,
    series: Vec<(usize, usize, Complex64)>,
    condition: f64,
}

impl BusSolver {
    pub fn new(net: &NetworkModel, omega_nom: f64) -> Result<Self, NetworkError> {
        let y = build_admittance(net, omega_nom)?;
        let condition = condition_estimate(&y);
        if !(condition <= MAX_CONDITION) {
            return Err(NetworkError::Singular { condition });
        }
        let index = net.bus_index()?;
        let shunts = net
            .loads
            .iter()
            .filter(|l| l.enabled)
            .map(|l| (index[&l.bus], impedance(l.r, l.l, omega_nom).inv()))
            .collect();
        let series = net
            .lines
            .iter()
            .map(|l| {
                (
                    index[&l.from],
                    index[&l.to],
                    impedance(l.r, l.l, omega_nom).inv(),
                )
            })
            .collect();
        Ok(Self {
            lu: y.clone().lu(),
            condition,
            dg_bus: net.dg_buses.iter().map(|b| index[b]).collect(),
            y,
            shunts,
            series,
        })
    }

    pub fn admittance(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    pub fn bus_count(&self) -> usize {
        self.y.nrows()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Bus index each DG injects into.
    pub fn dg_bus(&self) -> &[usize] {
        &self.dg_bus
    }

    /// Solves `Y V = I` in place: `rhs` holds injections on entry and bus
    /// voltages on return.
    pub fn solve_in_place(&self, rhs: &mut DVector<Complex64>) -> Result<(), NetworkError> {
        if rhs.len() != self.bus_count() {
            return Err(NetworkError::InjectionLength {
                expected: self.bus_count(),
                got: rhs.len(),
            });
        }
        if self.lu.solve_mut(rhs) {
            Ok(())
        } else {
            Err(NetworkError::Singular {
                condition: f64::INFINITY,
            })
        }
    }

    /// Bus voltages for per-bus injected currents, both in the common frame.
    pub fn solve_bus_voltages(&self, injections: &[DqPair]) -> Result<Vec<DqPair>, NetworkError> {
        let mut rhs = to_phasors(injections);
        self.solve_in_place(&mut rhs)?;
        Ok(from_phasors(&rhs))
    }

    /// Aggregates per-DG injections (common frame) onto buses.
    pub fn bus_injections(&self, dg_currents: &[DqPair]) -> Vec<DqPair> {
        let mut out = vec![DqPair::ZERO; self.bus_count()];
        for (k, i) in dg_currents.iter().enumerate() {
            let b = self.dg_bus[k];
            out[b] = out[b] + *i;
        }
        out
    }

    /// `||Y V - I|| / ||I||`, or the absolute norm when there is no injection.
    pub fn kcl_residual(
        &self,
        voltages: &DVector<Complex64>,
        injections: &DVector<Complex64>,
    ) -> f64 {
        let r = (&self.y * voltages - injections).norm();
        let scale = injections.norm();
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }

    /// Relative mismatch between complex power injected at the buses and
    /// power absorbed by loads and line losses.
    pub fn power_balance_residual(
        &self,
        voltages: &DVector<Complex64>,
        injections: &DVector<Complex64>,
    ) -> f64 {
        let mut injected = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (v, i) in voltages.iter().zip(injections.iter()) {
            let s = v * i.conj();
            injected += s;
            scale += s.norm();
        }
        let mut absorbed = Complex64::new(0.0, 0.0);
        for &(k, y) in &self.shunts {
            absorbed += voltages[k].norm_sqr() * y.conj();
        }
        for &(a, b, y) in &self.series {
            absorbed += (voltages[a] - voltages[b]).norm_sqr() * y.conj();
        }
        let r = (injected - absorbed).norm();
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }
}

pub fn to_phasors(x: &[DqPair]) -> DVector<Complex64> {
    DVector::from_iterator(x.len(), x.iter().map(|p| Complex64::new(p.d, p.q)))
}

pub fn from_phasors(x: &DVector<Complex64>) -> Vec<DqPair> {
    x.iter().map(|c| DqPair::new(c.re, c.im)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: f64 = 376.99111843077515;

    fn two_bus(load: bool) -> NetworkModel {
        NetworkModel {
            buses: vec![1, 2],
            lines: vec![Line {
                from: 1,
                to: 2,
                r: 0.5,
                l: 1e-3,
            }],
            loads: vec![Load {
                id: "A".into(),
                bus: 2,
                r: 20.0,
                l: 10e-3,
                enabled: load,
            }],
            dg_buses: vec![1],
        }
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn two_bus_line_only() {
        let net = two_bus(false);
        let y = build_admittance(&net, W).unwrap();
        let ys = Complex64::new(0.5, W * 1e-3).inv();
        assert_eq!(y[(0, 0)], ys);
        assert_eq!(y[(1, 1)], ys);
        assert_eq!(y[(0, 1)], -ys);
        assert_eq!(y[(1, 0)], -ys);
        assert!(matches!(
            BusSolver::new(&net, W),
            Err(NetworkError::Singular { .. })
        ));
    }

    #[test]
    fn two_bus_assembly() {
        let net = two_bus(true);
        let y = build_admittance(&net, W).unwrap();
        let ys = Complex64::new(0.5, W * 1e-3).inv();
        let yl = Complex64::new(20.0, W * 10e-3).inv();
        assert!(close(y[(0, 0)], ys, 1e-15));
        assert!(close(y[(0, 1)], -ys, 1e-15));
        assert!(close(y[(1, 0)], -ys, 1e-15));
        assert!(close(y[(1, 1)], ys + yl, 1e-15));
    }

    #[test]
    fn disabling_load_removes_its_admittance() {
        let mut net = two_bus(true);
        net.lines.push(Line {
            from: 1,
            to: 2,
            r: 1.0,
            l: 0.0,
        });
        net.loads.push(Load {
            id: "B".into(),
            bus: 1,
            r: 30.0,
            l: 0.0,
            enabled: true,
        });
        let on = build_admittance(&net, W).unwrap();
        let off_net = apply_event(
            &net,
            &NetworkEvent {
                load: "A".into(),
                action: LoadAction::SetEnabled { enabled: false },
            },
        )
        .unwrap();
        let off = build_admittance(&off_net, W).unwrap();
        let yl = Complex64::new(20.0, W * 10e-3).inv();
        assert!(close(on[(1, 1)] - off[(1, 1)], yl, 1e-12));
        assert_eq!(on[(0, 0)], off[(0, 0)]);
        assert_eq!(on[(0, 1)], off[(0, 1)]);
    }

    #[test]
    fn single_bus_ohms_law() {
        let net = NetworkModel {
            buses: vec![7],
            lines: vec![],
            loads: vec![Load {
                id: "L".into(),
                bus: 7,
                r: 10.0,
                l: 5e-3,
                enabled: true,
            }],
            dg_buses: vec![7],
        };
        let solver = BusSolver::new(&net, W).unwrap();
        let i = DqPair::new(3.0, -1.0);
        let v = solver.solve_bus_voltages(&[i]).unwrap();
        let expected = Complex64::new(3.0, -1.0) * Complex64::new(10.0, W * 5e-3);
        assert!((v[0].d - expected.re).abs() < 1e-12);
        assert!((v[0].q - expected.im).abs() < 1e-12);
    }

    #[test]
    fn two_bus_hand_solution() {
        let net = two_bus(true);
        let solver = BusSolver::new(&net, W).unwrap();
        let i = Complex64::new(12.0, 3.0);
        let v = solver
            .solve_bus_voltages(&[DqPair::new(12.0, 3.0), DqPair::ZERO])
            .unwrap();
        // Series path: bus 1 sees line + load, bus 2 sees load only.
        let zs = Complex64::new(0.5, W * 1e-3);
        let zl = Complex64::new(20.0, W * 10e-3);
        let v1 = i * (zs + zl);
        let v2 = i * zl;
        assert!(close(Complex64::new(v[0].d, v[0].q), v1, 1e-12));
        assert!(close(Complex64::new(v[1].d, v[1].q), v2, 1e-12));
    }

    #[test]
    fn zero_injection_zero_voltage() {
        let solver = BusSolver::new(&two_bus(true), W).unwrap();
        let v = solver.solve_bus_voltages(&[DqPair::ZERO; 2]).unwrap();
        assert!(v.iter().all(|x| *x == DqPair::ZERO));
    }

    #[test]
    fn scale_and_inverse_restore_admittance() {
        let net = two_bus(true);
        let y0 = build_admittance(&net, W).unwrap();
        let half = apply_event(
            &net,
            &NetworkEvent {
                load: "A".into(),
                action: LoadAction::ScaleImpedance { factor: 0.5 },
            },
        )
        .unwrap();
        let y_half = build_admittance(&half, W).unwrap();
        let yl = Complex64::new(20.0, W * 10e-3).inv();
        assert!(close(y_half[(1, 1)] - y0[(1, 1)], yl, 1e-12));
        let back = apply_event(
            &half,
            &NetworkEvent {
                load: "A".into(),
                action: LoadAction::ScaleImpedance { factor: 2.0 },
            },
        )
        .unwrap();
        assert_eq!(build_admittance(&back, W).unwrap(), y0);

        let toggle = NetworkEvent {
            load: "A".into(),
            action: LoadAction::Toggle,
        };
        let twice = apply_event(&apply_event(&net, &toggle).unwrap(), &toggle).unwrap();
        assert_eq!(twice, net);
    }

    #[test]
    fn unknown_load_rejected() {
        let err = apply_event(
            &two_bus(true),
            &NetworkEvent {
                load: "nope".into(),
                action: LoadAction::Toggle,
            },
        )
        .unwrap_err();
        assert_eq!(err, NetworkError::UnknownLoad("nope".into()));
    }

    #[test]
    fn validation_errors() {
        let mut net = two_bus(true);
        net.lines[0].r = 0.0;
        assert!(matches!(
            net.validate(),
            Err(NetworkError::InvalidElement { .. })
        ));

        let mut net = two_bus(true);
        net.buses.push(3);
        assert_eq!(net.validate(), Err(NetworkError::Disconnected(1, 3)));

        let mut net = two_bus(true);
        net.dg_buses = vec![9];
        assert_eq!(net.validate(), Err(NetworkError::UnknownBus(9)));
    }
}
