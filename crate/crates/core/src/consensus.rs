//! Leader-follower secondary voltage control over a zoned communication graph.
//!
//! Each DG integrates a correction `dv_n` that is added to its droop voltage
//! set-point. Followers track their in-neighbours; a pinned agent (leader)
//! additionally tracks the reference voltage. Zones are disjoint agent sets
//! with no communication across their boundaries, so every zone is an
//! independent tracking problem rooted at its own leader.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Directed communication link: `to` receives the value of `from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    /// Also add the reverse link with the same weight.
    pub bidirectional: bool,
}

impl Edge {
    pub fn both(a: usize, b: usize) -> Self {
        Self {
            from: a,
            to: b,
            weight: 1.0,
            bidirectional: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommGraph {
    /// `adjacency[i][j] > 0` iff agent `i` receives agent `j`'s value.
    adjacency: Vec<Vec<f64>>,
    pinning: Vec<f64>,
    coupling: Vec<f64>,
    zones: Vec<Vec<usize>>,
    leaders: Vec<usize>,
}

/// Builds a zoned graph with unit pinning on each zone's leader.
pub fn build_zonal_graph(
    n: usize,
    zones: &[Vec<usize>],
    leaders: &[usize],
    edges: &[Edge],
    coupling: &[f64],
) -> Result<CommGraph, GraphError> {
    let mut pinning = vec![0.0; n];
    for &l in leaders {
        if l >= n {
            return Err(GraphError::AgentOutOfRange(l));
        }
        pinning[l] = 1.0;
    }
    CommGraph::new(n, zones, leaders, edges, coupling, &pinning)
}

impl CommGraph {
    /// General constructor. `pinning` may put gains on agents other than the
    /// designated leaders, but every leader needs a positive gain.
    pub fn new(
        n: usize,
        zones: &[Vec<usize>],
        leaders: &[usize],
        edges: &[Edge],
        coupling: &[f64],
        pinning: &[f64],
    ) -> Result<Self, GraphError> {
        if coupling.len() != n {
            return Err(GraphError::Length {
                what: "coupling gains",
                expected: n,
                got: coupling.len(),
            });
        }
        if pinning.len() != n {
            return Err(GraphError::Length {
                what: "pinning gains",
                expected: n,
                got: pinning.len(),
            });
        }

        let mut zone_of = vec![None; n];
        for (z, members) in zones.iter().enumerate() {
            if members.is_empty() {
                return Err(GraphError::EmptyZone(z));
            }
            for &a in members {
                let slot = zone_of.get_mut(a).ok_or(GraphError::AgentOutOfRange(a))?;
                if slot.is_some() {
                    return Err(GraphError::DuplicateAgent(a));
                }
                *slot = Some(z);
            }
        }
        let zone_of: Vec<usize> = zone_of
            .iter()
            .enumerate()
            .map(|(a, z)| z.ok_or(GraphError::Unassigned(a)))
            .collect::<Result<_, _>>()?;

        if leaders.len() != zones.len() {
            return Err(GraphError::LeaderCount {
                zones: zones.len(),
                leaders: leaders.len(),
            });
        }
        for (z, &l) in leaders.iter().enumerate() {
            if l >= n {
                return Err(GraphError::AgentOutOfRange(l));
            }
            if zone_of[l] != z {
                return Err(GraphError::LeaderOutsideZone { leader: l, zone: z });
            }
            if !(pinning[l] > 0.0) {
                return Err(GraphError::InvalidGain {
                    what: "pinning gain",
                    agent: l,
                    constraint: "> 0 on a leader",
                    value: pinning[l],
                });
            }
        }
        for (a, (&c, &g)) in coupling.iter().zip(pinning).enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(GraphError::InvalidGain {
                    what: "coupling gain",
                    agent: a,
                    constraint: "> 0",
                    value: c,
                });
            }
            if !(g.is_finite() && g >= 0.0) {
                return Err(GraphError::InvalidGain {
                    what: "pinning gain",
                    agent: a,
                    constraint: ">= 0",
                    value: g,
                });
            }
        }

        let mut adjacency = vec![vec![0.0; n]; n];
        for e in edges {
            for (from, to) in [(e.from, e.to), (e.to, e.from)]
                .into_iter()
                .take(if e.bidirectional { 2 } else { 1 })
            {
                if from >= n {
                    return Err(GraphError::AgentOutOfRange(from));
                }
                if to >= n {
                    return Err(GraphError::AgentOutOfRange(to));
                }
                if from == to {
                    return Err(GraphError::SelfLoop(from));
                }
                if zone_of[from] != zone_of[to] {
                    return Err(GraphError::CrossZoneEdge { from, to });
                }
                if !(e.weight.is_finite() && e.weight > 0.0) {
                    return Err(GraphError::InvalidGain {
                        what: "edge weight",
                        agent: to,
                        constraint: "> 0",
                        value: e.weight,
                    });
                }
                adjacency[to][from] = e.weight;
            }
        }

        let graph = Self {
            adjacency,
            pinning: pinning.to_vec(),
            coupling: coupling.to_vec(),
            zones: zones.to_vec(),
            leaders: leaders.to_vec(),
        };
        graph.check_reachability(&zone_of)?;
        Ok(graph)
    }

    /// Breadth-first search from all pinned agents along `from -> to` links.
    fn check_reachability(&self, zone_of: &[usize]) -> Result<(), GraphError> {
        let n = self.len();
        let mut reached = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&a| self.pinning[a] > 0.0).collect();
        for &a in &queue {
            reached[a] = true;
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if self.adjacency[i][j] > 0.0 && !reached[i] {
                    reached[i] = true;
                    queue.push_back(i);
                }
            }
        }
        match reached.iter().position(|r| !r) {
            Some(agent) => Err(GraphError::Unreachable {
                agent,
                zone: zone_of[agent],
            }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.pinning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pinning.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i][j]
    }

    pub fn adjacency(&self) -> &[Vec<f64>] {
        &self.adjacency
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn zones(&self) -> &[Vec<usize>] {
        &self.zones
    }

    pub fn leaders(&self) -> &[usize] {
        &self.leaders
    }

    /// Directed links, i.e. messages sent per sampling instant.
    pub fn directed_edge_count(&self) -> usize {
        self.adjacency
            .iter()
            .flatten()
            .filter(|&&a| a > 0.0)
            .count()
    }

    /// Directed links as `(from, to, weight)`, ordered by receiver then sender.
    pub fn directed_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.adjacency.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if a > 0.0 {
                    out.push((j, i, a));
                }
            }
        }
        out
    }

    /// Same graph with every edge weight and pinning gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.adjacency {
            for a in row.iter_mut() {
                *a *= factor;
            }
        }
        for g in &mut out.pinning {
            *g *= factor;
        }
        out
    }
}

/// `L + G`: graph Laplacian of the adjacency plus diagonal pinning gains.
pub fn pinned_laplacian(graph: &CommGraph) -> DMatrix<f64> {
    let n = graph.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            graph.adjacency[i].iter().sum::<f64>() + graph.pinning[i]
        } else {
            -graph.adjacency[i][j]
        }
    })
}

/// Rate of agent `i`'s set-point correction. `own` is the agent's local
/// voltage measurement and `received[j]` the last value received from agent
/// `j`.
///
/// The loop is negative feedback: an agent above the reference (or above its
/// neighbours) lowers its set-point.
pub fn consensus_rate(i: usize, own: f64, received: &[f64], graph: &CommGraph, v_ref: f64) -> f64 {
    let neighbour_error: f64 = graph.adjacency[i]
        .iter()
        .zip(received)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &v)| a * (own - v))
        .sum();
    -graph.coupling[i] * (neighbour_error + graph.pinning[i] * (own - v_ref))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryConfig {
    /// Reference voltage, V.
    pub v_ref: f64,
    /// Activation time, s.
    pub t_activate: f64,
    /// Communication sampling period, s.
    #[serde(rename = "T_comm")]
    pub t_comm: f64,
    /// When false the secondary layer never activates.
    pub enabled: bool,
}

impl Default for SecondaryConfig {
    fn default() -> Self {
        Self {
            v_ref: 381.0,
            t_activate: 0.6,
            t_comm: 1e-3,
            enabled: true,
        }
    }
}

/// Communication-layer state of all agents.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondaryState {
    /// Per-agent set-point correction, V.
    pub dv_n: Vec<f64>,
    /// Last value each agent broadcast, V.
    pub held_v: Vec<f64>,
    /// Cumulative network messages.
    pub msg_count: u64,
    pub active: bool,
    /// Sampling instants processed so far.
    pub samples: u64,
}

impl SecondaryState {
    pub fn new(n: usize) -> Self {
        Self {
            dv_n: vec![0.0; n],
            held_v: vec![0.0; n],
            msg_count: 0,
            active: false,
            samples: 0,
        }
    }

    /// In-place form of [`sample_and_hold`].
    pub fn advance(&mut self, t: f64, v_od: &[f64], graph: &CommGraph, cfg: &SecondaryConfig) {
        if !cfg.enabled || t < cfg.t_activate {
            return;
        }
        self.active = true;
        // Index of the most recent sampling instant at or before t.
        let k = ((t - cfg.t_activate) / cfg.t_comm + 1e-9).floor() as u64;
        let due = k + 1;
        if due > self.samples {
            self.held_v.copy_from_slice(v_od);
            self.msg_count += (due - self.samples) * graph.directed_edge_count() as u64;
            self.samples = due;
        }
    }
}

/// Delivers fresh voltage samples when a sampling instant has been reached
/// since the last call. Leaders obtain the reference locally, so pinning
/// does not count as a network message.
pub fn sample_and_hold(
    t: f64,
    v_od: &[f64],
    graph: &CommGraph,
    cfg: &SecondaryConfig,
    state: &SecondaryState,
) -> SecondaryState {
    let mut next = state.clone();
    next.advance(t, v_od, graph, cfg);
    next
}
