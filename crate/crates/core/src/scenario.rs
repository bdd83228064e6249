//! JSON scenario documents.
//!
//! Every key is optional. Omitted keys are filled from the built-in six-DG
//! test system and recorded in a provenance list so a run can always be
//! reproduced from its resolved document. DG numbers in the document are
//! 1-based; bus ids are arbitrary labels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consensus::{CommGraph, Edge, SecondaryConfig};
use crate::dg::DgParams;
use crate::engine::{Scenario, TimedEvent};
use crate::error::{ModelError, ScenarioError};
use crate::network::{Line, Load, LoadAction, NetworkEvent, NetworkModel};

pub const DEFAULT_DT: f64 = 2e-5;
pub const DEFAULT_T_END: f64 = 2.5;
pub const DEFAULT_DECIMATION: usize = 10;
pub const DEFAULT_COUPLING: f64 = 30.0;
pub const DEFAULT_LINE_R: f64 = 0.23;
pub const DEFAULT_LINE_L: f64 = 8e-3;
/// Segments in the inter-zone tie.
pub const TIE_SEGMENTS: f64 = 3.0;
pub const DEFAULT_LOAD_R: f64 = 15.0;
pub const DEFAULT_LOAD_L: f64 = 10e-3;
pub const DEFAULT_EVENT_T: f64 = 0.2;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgs: Option<Vec<DgFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<SecondaryFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<EventFile>>,
}

macro_rules! dg_file {
    ($($field:ident $(: $alias:literal)?),* $(,)?) => {
        /// Per-DG overrides; omitted fields take the shared defaults.
        #[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct DgFile {
            $(
                #[serde(default, skip_serializing_if = "Option::is_none" $(, alias = $alias)?)]
                pub $field: Option<f64>,
            )*
        }

        impl DgFile {
            fn resolve(&self, k: usize, provenance: &mut Vec<String>) -> DgParams {
                let base = DgParams::default();
                DgParams {
                    $($field: self.$field.unwrap_or_else(|| {
                        provenance.push(format!("dgs[{}].{}", k, stringify!($field)));
                        base.$field
                    }),)*
                }
            }

            fn from_params(p: &DgParams) -> Self {
                Self { $($field: Some(p.$field),)* }
            }
        }
    };
}

dg_file! {
    r_f,
    l_f: "L_f",
    c_f: "C_f",
    r_c,
    l_c: "L_c",
    omega_c,
    k_pv: "K_pv",
    k_iv: "K_iv",
    k_pc: "K_pc",
    k_ic: "K_ic",
    feedforward: "F",
    m_p: "m",
    n_q: "n",
    omega_n,
    v_n: "V_n",
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buses: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<Vec<Line>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<Vec<LoadFile>>,
    /// Bus of each DG, in DG order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachments: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadFile {
    pub id: String,
    pub bus: u32,
    pub r: f64,
    pub l: f64,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaders: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFile {
    pub from: usize,
    pub to: usize,
    #[serde(default = "unit")]
    pub weight: f64,
    #[serde(default = "yes")]
    pub bidirectional: bool,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_activate: Option<f64>,
    #[serde(default, rename = "T_comm", skip_serializing_if = "Option::is_none")]
    pub t_comm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimation: Option<usize>,
    /// 1-based DG number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_frame_dg: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFile {
    pub t: f64,
    pub load: String,
    /// `toggle`, `set_enabled` or `scale_impedance`.
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
}

/// The two bundled experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Two zones, leaders DG1 and DG4.
    Zonal,
    /// One zone over all six DGs, leader DG1, star links.
    Global,
}

impl Preset {
    pub fn document(self) -> ScenarioFile {
        match self {
            Preset::Zonal => ScenarioFile::default(),
            Preset::Global => ScenarioFile {
                graph: Some(GraphFile {
                    zones: Some(vec![(1..=6).collect()]),
                    leaders: Some(vec![1]),
                    edges: Some((2..=6).map(|k| EdgeFile::both(1, k)).collect()),
                    ..GraphFile::default()
                }),
                ..ScenarioFile::default()
            },
        }
    }
}

impl EdgeFile {
    pub fn both(a: usize, b: usize) -> Self {
        Self {
            from: a,
            to: b,
            weight: 1.0,
            bidirectional: true,
        }
    }
}

/// A validated scenario plus the list of keys that were filled by defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub provenance: Vec<String>,
}

/// Two radial feeders of three buses joined by a tie line between buses 3
/// and 4. DG k sits on bus k. Lines are mainly inductive so that reactive
/// power stays local; the tie is three segments long.
pub fn default_network() -> NetworkFile {
    let line = |from, to| Line {
        from,
        to,
        r: DEFAULT_LINE_R,
        l: DEFAULT_LINE_L,
    };
    let tie = Line {
        r: TIE_SEGMENTS * DEFAULT_LINE_R,
        l: TIE_SEGMENTS * DEFAULT_LINE_L,
        ..line(3, 4)
    };
    let load = |id: &str, bus| LoadFile {
        id: id.into(),
        bus,
        r: DEFAULT_LOAD_R,
        l: DEFAULT_LOAD_L,
        enabled: true,
    };
    NetworkFile {
        buses: Some((1..=6).collect()),
        lines: Some(vec![line(1, 2), line(2, 3), tie, line(4, 5), line(5, 6)]),
        loads: Some(vec![
            load("L1", 2),
            load("L2", 3),
            load("L3", 5),
            load("L4", 6),
        ]),
        attachments: Some((1..=6).collect()),
    }
}

pub fn default_events() -> Vec<EventFile> {
    vec![EventFile {
        t: DEFAULT_EVENT_T,
        load: "L4".into(),
        action: "scale_impedance".into(),
        enabled: None,
        factor: Some(0.5),
    }]
}

fn positive(key: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ScenarioError::invalid(key, format!("must be > 0, got {v}")))
    }
}

fn dg_index(key: &str, k: usize, n: usize) -> Result<usize, ScenarioError> {
    if (1..=n).contains(&k) {
        Ok(k - 1)
    } else {
        Err(ScenarioError::invalid(
            key,
            format!("DG number {k} outside 1..={n}"),
        ))
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        // An empty document means "all defaults".
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario documents always serialise")
    }

    /// Fully specified document for `scenario`.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let g = &scenario.graph;
        Self {
            dgs: Some(scenario.dg_params.iter().map(DgFile::from_params).collect()),
            network: Some(NetworkFile {
                buses: Some(scenario.network.buses.clone()),
                lines: Some(scenario.network.lines.clone()),
                loads: Some(
                    scenario
                        .network
                        .loads
                        .iter()
                        .map(|l| LoadFile {
                            id: l.id.clone(),
                            bus: l.bus,
                            r: l.r,
                            l: l.l,
                            enabled: l.enabled,
                        })
                        .collect(),
                ),
                attachments: Some(scenario.network.dg_buses.clone()),
            }),
            graph: Some(GraphFile {
                zones: Some(
                    g.zones()
                        .iter()
                        .map(|z| z.iter().map(|a| a + 1).collect())
                        .collect(),
                ),
                leaders: Some(g.leaders().iter().map(|a| a + 1).collect()),
                edges: Some(
                    g.directed_edges()
                        .into_iter()
                        .map(|(from, to, weight)| EdgeFile {
                            from: from + 1,
                            to: to + 1,
                            weight,
                            bidirectional: false,
                        })
                        .collect(),
                ),
                c_v: Some(g.coupling().to_vec()),
                g: Some(g.pinning().to_vec()),
            }),
            secondary: Some(SecondaryFile {
                v_ref: Some(scenario.secondary.v_ref),
                t_activate: Some(scenario.secondary.t_activate),
                t_comm: Some(scenario.secondary.t_comm),
                enabled: Some(scenario.secondary.enabled),
            }),
            sim: Some(SimFile {
                dt: Some(scenario.dt),
                t_end: Some(scenario.t_end),
                decimation: Some(scenario.log_decimation),
                common_frame_dg: Some(scenario.common_frame_dg + 1),
            }),
            events: Some(
                scenario
                    .events
                    .iter()
                    .map(|e| {
                        let (action, enabled, factor) = match e.event.action {
                            LoadAction::Toggle => ("toggle", None, None),
                            LoadAction::SetEnabled { enabled } => {
                                ("set_enabled", Some(enabled), None)
                            }
                            LoadAction::ScaleImpedance { factor } => {
                                ("scale_impedance", None, Some(factor))
                            }
                        };
                        EventFile {
                            t: e.t,
                            load: e.event.load.clone(),
                            action: action.into(),
                            enabled,
                            factor,
                        }
                    })
                    .collect(),
            ),
        }
    }

    /// Fills defaults and validates.
    pub fn resolve(&self) -> Result<Resolved, ScenarioError> {
        let mut prov = Vec::new();

        let dg_params: Vec<DgParams> = match &self.dgs {
            Some(dgs) => dgs
                .iter()
                .enumerate()
                .map(|(k, d)| d.resolve(k, &mut prov))
                .collect(),
            None => {
                prov.push("dgs".into());
                vec![DgParams::default(); 6]
            }
        };
        let n = dg_params.len();
        if n == 0 {
            return Err(ScenarioError::invalid("dgs", "at least one DG is required"));
        }
        for (k, p) in dg_params.iter().enumerate() {
            p.validate().map_err(|e| match e {
                ModelError::InvalidParam {
                    name,
                    constraint,
                    value,
                } => ScenarioError::invalid(
                    format!("dgs[{k}].{name}"),
                    format!("{constraint}, got {value}"),
                ),
                other => ScenarioError::invalid(format!("dgs[{k}]"), other.to_string()),
            })?;
        }

        let network = self.resolve_network(n, &mut prov)?;
        let graph = self.resolve_graph(n, &mut prov)?;

        let sec = self.secondary.clone().unwrap_or_default();
        let base = SecondaryConfig::default();
        let mut pick = |v: Option<f64>, key: &str, default: f64| {
            v.unwrap_or_else(|| {
                prov.push(format!("secondary.{key}"));
                default
            })
        };
        let secondary = SecondaryConfig {
            v_ref: positive("secondary.v_ref", pick(sec.v_ref, "v_ref", base.v_ref))?,
            t_activate: pick(sec.t_activate, "t_activate", base.t_activate),
            t_comm: positive("secondary.T_comm", pick(sec.t_comm, "T_comm", base.t_comm))?,
            enabled: sec.enabled.unwrap_or_else(|| {
                prov.push("secondary.enabled".into());
                true
            }),
        };
        if !(secondary.t_activate.is_finite() && secondary.t_activate >= 0.0) {
            return Err(ScenarioError::invalid(
                "secondary.t_activate",
                format!("must be >= 0, got {}", secondary.t_activate),
            ));
        }

        let sim = self.sim.clone().unwrap_or_default();
        let mut pick = |v: Option<f64>, key: &str, default: f64| {
            v.unwrap_or_else(|| {
                prov.push(format!("sim.{key}"));
                default
            })
        };
        let dt = positive("sim.dt", pick(sim.dt, "dt", DEFAULT_DT))?;
        let t_end = positive("sim.t_end", pick(sim.t_end, "t_end", DEFAULT_T_END))?;
        let log_decimation = sim.decimation.unwrap_or_else(|| {
            prov.push("sim.decimation".into());
            DEFAULT_DECIMATION
        });
        if log_decimation == 0 {
            return Err(ScenarioError::invalid("sim.decimation", "must be >= 1"));
        }
        let common_frame_dg = match sim.common_frame_dg {
            Some(k) => dg_index("sim.common_frame_dg", k, n)?,
            None => {
                prov.push("sim.common_frame_dg".into());
                graph.leaders()[0]
            }
        };

        let events = match &self.events {
            Some(e) => e.clone(),
            None => {
                prov.push("events".into());
                if network.load("L4").is_some() {
                    default_events()
                } else {
                    Vec::new()
                }
            }
        };
        let mut timed = Vec::with_capacity(events.len());
        for (k, e) in events.iter().enumerate() {
            let key = |f: &str| format!("events[{k}].{f}");
            if !(e.t.is_finite() && e.t >= 0.0) {
                return Err(ScenarioError::invalid(
                    key("t"),
                    format!("must be >= 0, got {}", e.t),
                ));
            }
            if network.load(&e.load).is_none() {
                return Err(ScenarioError::invalid(
                    key("load"),
                    format!("unknown load {:?}", e.load),
                ));
            }
            let action = match e.action.as_str() {
                "toggle" => LoadAction::Toggle,
                "set_enabled" => LoadAction::SetEnabled {
                    enabled: e.enabled.ok_or_else(|| {
                        ScenarioError::invalid(key("enabled"), "required for set_enabled")
                    })?,
                },
                "scale_impedance" => LoadAction::ScaleImpedance {
                    factor: positive(
                        &key("factor"),
                        e.factor.ok_or_else(|| {
                            ScenarioError::invalid(key("factor"), "required for scale_impedance")
                        })?,
                    )?,
                },
                other => {
                    return Err(ScenarioError::invalid(
                        key("action"),
                        format!("unknown action {other:?} (toggle, set_enabled, scale_impedance)"),
                    ))
                }
            };
            timed.push(TimedEvent {
                t: e.t,
                event: NetworkEvent {
                    load: e.load.clone(),
                    action,
                },
            });
        }
        // Stable sort keeps same-time events in document order.
        timed.sort_by(|a, b| a.t.total_cmp(&b.t));

        let scenario = Scenario {
            dg_params,
            network,
            graph,
            secondary,
            events: timed,
            t_end,
            dt,
            common_frame_dg,
            log_decimation,
        };
        scenario
            .validate()
            .map_err(|e| ScenarioError::invalid("scenario", e.to_string()))?;
        Ok(Resolved {
            scenario,
            provenance: prov,
        })
    }

    fn resolve_network(
        &self,
        n: usize,
        prov: &mut Vec<String>,
    ) -> Result<NetworkModel, ScenarioError> {
        let given = self.network.clone().unwrap_or_default();
        let defaults = default_network();
        fn take<T>(prov: &mut Vec<String>, key: &str, v: Option<T>, d: Option<T>) -> T {
            v.unwrap_or_else(|| {
                prov.push(format!("network.{key}"));
                d.expect("default network is complete")
            })
        }
        let buses = take(prov, "buses", given.buses, defaults.buses);
        let lines = take(prov, "lines", given.lines, defaults.lines);
        let loads = take(prov, "loads", given.loads, defaults.loads);
        let dg_buses: Vec<u32> = match given.attachments {
            Some(a) => a,
            None => {
                prov.push("network.attachments".into());
                if n <= buses.len() {
                    buses[..n].to_vec()
                } else {
                    return Err(ScenarioError::invalid(
                        "network.attachments",
                        format!("required when there are more DGs ({n}) than buses"),
                    ));
                }
            }
        };
        if dg_buses.len() != n {
            return Err(ScenarioError::invalid(
                "network.attachments",
                format!("expected {n} entries (one per DG), got {}", dg_buses.len()),
            ));
        }
        let net = NetworkModel {
            buses,
            lines,
            loads: loads
                .into_iter()
                .map(|l| Load {
                    id: l.id,
                    bus: l.bus,
                    r: l.r,
                    l: l.l,
                    enabled: l.enabled,
                })
                .collect(),
            dg_buses,
        };
        net.validate()
            .map_err(|e| ScenarioError::invalid("network", e.to_string()))?;
        Ok(net)
    }

    fn resolve_graph(&self, n: usize, prov: &mut Vec<String>) -> Result<CommGraph, ScenarioError> {
        let given = self.graph.clone().unwrap_or_default();
        let zones: Vec<Vec<usize>> = match given.zones {
            Some(z) => z
                .iter()
                .map(|zone| {
                    zone.iter()
                        .map(|&k| dg_index("graph.zones", k, n))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?,
            None => {
                prov.push("graph.zones".into());
                if n == 6 {
                    vec![vec![0, 1, 2], vec![3, 4, 5]]
                } else {
                    vec![(0..n).collect()]
                }
            }
        };
        let leaders: Vec<usize> = match given.leaders {
            Some(l) => l
                .iter()
                .map(|&k| dg_index("graph.leaders", k, n))
                .collect::<Result<_, _>>()?,
            None => {
                prov.push("graph.leaders".into());
                zones.iter().map(|z| z[0]).collect()
            }
        };
        let edges: Vec<Edge> = match given.edges {
            Some(e) => e
                .iter()
                .map(|e| {
                    Ok(Edge {
                        from: dg_index("graph.edges.from", e.from, n)?,
                        to: dg_index("graph.edges.to", e.to, n)?,
                        weight: e.weight,
                        bidirectional: e.bidirectional,
                    })
                })
                .collect::<Result<_, ScenarioError>>()?,
            None => {
                prov.push("graph.edges".into());
                zones
                    .iter()
                    .zip(&leaders)
                    .flat_map(|(z, &l)| {
                        z.iter()
                            .filter(move |&&a| a != l)
                            .map(move |&a| Edge::both(l, a))
                    })
                    .collect()
            }
        };
        let coupling = given.c_v.unwrap_or_else(|| {
            prov.push("graph.c_v".into());
            vec![DEFAULT_COUPLING; n]
        });
        let pinning = given.g.unwrap_or_else(|| {
            prov.push("graph.g".into());
            let mut g = vec![0.0; n];
            for &l in &leaders {
                if l < n {
                    g[l] = 1.0;
                }
            }
            g
        });
        CommGraph::new(n, &zones, &leaders, &edges, &coupling, &pinning)
            .map_err(|e| ScenarioError::invalid("graph", e.to_string()))
    }
}

/// Reads and resolves a scenario document.
pub fn parse_scenario(path: &Path) -> Result<Resolved, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioFile::from_json(&text)?.resolve()
}
