use super::equilibrium::find_equilibrium;
use super::metrics::RunMetrics;
use super::rk4::{first_non_finite, Rk4};
use super::system::System;
use super::Scenario;
use crate::consensus::{SecondaryConfig, SecondaryState};
use crate::dg::frequency;
use crate::error::SimError;
use crate::network::apply_event;

/// Per-DG channel suffixes, in CSV column order.
pub const CHANNELS: [&str; 6] = ["vod", "voq", "P", "Q", "omega", "dvn"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DgChannels {
    pub v_od: Vec<f64>,
    pub v_oq: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub omega: Vec<f64>,
    pub dv_n: Vec<f64>,
}

impl DgChannels {
    fn get(&self, suffix: &str) -> Option<&[f64]> {
        Some(match suffix {
            "vod" => &self.v_od,
            "voq" => &self.v_oq,
            "P" => &self.p,
            "Q" => &self.q,
            "omega" => &self.omega,
            "dvn" => &self.dv_n,
            _ => return None,
        })
    }
}

/// Decimated trajectories. Every series shares `time`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeriesLog {
    pub time: Vec<f64>,
    pub dg: Vec<DgChannels>,
    pub bus_ids: Vec<u32>,
    /// Voltage magnitude per bus.
    pub bus_voltage: Vec<Vec<f64>>,
    pub msg_count: Vec<u64>,
    /// Activation time after snapping to the step grid.
    pub t_activate: f64,
    pub v_ref: f64,
    pub warnings: Vec<String>,
}

impl TimeSeriesLog {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Looks up a channel such as `dg2_vod` (1-based DG number).
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        let rest = name.strip_prefix("dg")?;
        let (num, suffix) = rest.split_once('_')?;
        let k: usize = num.parse().ok()?;
        self.dg.get(k.checked_sub(1)?)?.get(suffix)
    }

    /// CSV header: time, six channels per DG, cumulative message count.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = vec!["t".to_string()];
        for k in 1..=self.dg.len() {
            out.extend(CHANNELS.iter().map(|c| format!("dg{k}_{c}")));
        }
        out.push("msg_count".into());
        out
    }

    fn record(
        &mut self,
        t: f64,
        x: &[f64],
        sys: &mut System,
        msg_count: u64,
    ) -> Result<(), SimError> {
        self.time.push(t);
        for (k, ch) in self.dg.iter_mut().enumerate() {
            let s = System::dg_state(x, k);
            ch.v_od.push(s.v_o.d);
            ch.v_oq.push(s.v_o.q);
            ch.p.push(s.p);
            ch.q.push(s.q);
            ch.omega.push(frequency(&s, &sys.params()[k]));
            ch.dv_n.push(System::dv_n(x, k));
        }
        for (series, v) in self.bus_voltage.iter_mut().zip(sys.bus_voltages(x)?) {
            series.push(v.norm());
        }
        self.msg_count.push(msg_count);
        Ok(())
    }
}

fn snap(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Integrates the scenario from its droop equilibrium and computes metrics.
pub fn run_scenario(scenario: &Scenario) -> Result<(TimeSeriesLog, RunMetrics), SimError> {
    let equilibrium = find_equilibrium(scenario)?;
    let mut sys = System::new(scenario)?;
    let dt = scenario.dt;
    let n = scenario.dg_count();
    let steps = scenario.step_count();
    let mut warnings = Vec::new();
    if equilibrium.warm_started {
        warnings.push("equilibrium required warm-up integration before Newton".to_string());
    }

    let mut schedule = Vec::with_capacity(scenario.events.len());
    for e in &scenario.events {
        let step = snap(e.t, dt);
        let snapped = step as f64 * dt;
        if step > steps {
            warnings.push(format!(
                "event on load {} at t = {} lies beyond t_end and was ignored",
                e.event.load, e.t
            ));
            continue;
        }
        if (snapped - e.t).abs() > 1e-9 * e.t.abs().max(1.0) {
            warnings.push(format!(
                "event on load {} at t = {} snapped to t = {}",
                e.event.load, e.t, snapped
            ));
        }
        schedule.push((step, &e.event));
    }

    let act_step = snap(scenario.secondary.t_activate, dt);
    let cfg = SecondaryConfig {
        t_activate: act_step as f64 * dt,
        ..scenario.secondary.clone()
    };
    if (cfg.t_activate - scenario.secondary.t_activate).abs()
        > 1e-9 * scenario.secondary.t_activate.abs().max(1.0)
    {
        warnings.push(format!(
            "secondary activation at t = {} snapped to t = {}",
            scenario.secondary.t_activate, cfg.t_activate
        ));
    }
    let comm_ratio = cfg.t_comm / dt;
    if (comm_ratio - comm_ratio.round()).abs() > 1e-6 {
        warnings.push(format!(
            "T_comm = {} is not a multiple of dt = {}; samples fall on the next step",
            cfg.t_comm, dt
        ));
    }

    let mut log = TimeSeriesLog {
        dg: vec![DgChannels::default(); n],
        bus_ids: scenario.network.buses.clone(),
        bus_voltage: vec![Vec::new(); scenario.network.buses.len()],
        t_activate: cfg.t_activate,
        v_ref: cfg.v_ref,
        ..TimeSeriesLog::default()
    };

    let mut x = equilibrium.state.clone();
    let mut net = scenario.network.clone();
    let mut secondary = SecondaryState::new(n);
    let mut v_od = vec![0.0; n];
    let mut rk = Rk4::new(x.len());
    let mut next_event = 0;

    log.record(0.0, &x, &mut sys, 0)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        while next_event < schedule.len() && schedule[next_event].0 == step {
            net = apply_event(&net, schedule[next_event].1)?;
            sys.set_network(&net)?;
            next_event += 1;
        }

        for (k, v) in v_od.iter_mut().enumerate() {
            *v = System::v_od(&x, k);
        }
        secondary.advance(t, &v_od, &scenario.graph, &cfg);
        let held = secondary.active.then_some(secondary.held_v.as_slice());

        rk.step(|_, x, dx| sys.rates(x, dx, held), t, &mut x, dt)?;
        if let Some(i) = first_non_finite(&x) {
            return Err(SimError::NonFinite {
                channel: System::channel_name(i),
                t: (step + 1) as f64 * dt,
            });
        }
        for (k, d) in secondary.dv_n.iter_mut().enumerate() {
            *d = System::dv_n(&x, k);
        }

        if (step + 1) % scenario.log_decimation == 0 {
            log.record((step + 1) as f64 * dt, &x, &mut sys, secondary.msg_count)?;
        }
    }
    log.warnings = warnings;

    let metrics = RunMetrics::from_log(
        &log,
        secondary.msg_count,
        sys.max_kcl_residual(),
        sys.max_power_residual(),
        equilibrium.residual,
    )?;
    Ok((log, metrics))
}
