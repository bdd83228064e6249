use serde::{Deserialize, Serialize};

use super::run::TimeSeriesLog;
use crate::error::SimError;

/// Settling band as a fraction of the largest voltage error at activation.
pub const SETTLING_FRACTION: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Absolute settling time per DG voltage; `None` when not settled.
    pub settling_time: Vec<Option<f64>>,
    pub settled: bool,
    /// Half-width of the band around `v_ref`, V.
    pub settling_band: f64,
    /// `v_od(t_end) - v_ref` per DG, V.
    pub final_voltage_error: Vec<f64>,
    pub total_messages: u64,
    /// Largest `|v_od - v_ref|` over all DGs and logged samples, V.
    pub peak_voltage_deviation: f64,
    pub t_activate: f64,
    pub t_end: f64,
    pub v_ref: f64,
    pub max_kcl_residual: f64,
    pub max_power_residual: f64,
    pub equilibrium_residual: f64,
    pub warnings: Vec<String>,
}

impl RunMetrics {
    pub(crate) fn from_log(
        log: &TimeSeriesLog,
        total_messages: u64,
        max_kcl_residual: f64,
        max_power_residual: f64,
        equilibrium_residual: f64,
    ) -> Result<Self, SimError> {
        let v_ref = log.v_ref;
        // Last logged sample at or before activation.
        let k_act = log
            .time
            .iter()
            .rposition(|&t| t <= log.t_activate + 1e-12)
            .unwrap_or(0);
        let initial_error = log
            .dg
            .iter()
            .map(|ch| (ch.v_od[k_act] - v_ref).abs())
            .fold(0.0, f64::max);
        let band = (SETTLING_FRACTION * initial_error).max(1e-9 * v_ref.abs().max(1.0));

        let settling_time = (1..=log.dg.len())
            .map(|k| settling_time(log, &format!("dg{k}_vod"), v_ref, band))
            .collect::<Result<Vec<_>, _>>()?;
        let final_voltage_error = log
            .dg
            .iter()
            .map(|ch| ch.v_od.last().copied().unwrap_or(f64::NAN) - v_ref)
            .collect();
        let peak_voltage_deviation = log
            .dg
            .iter()
            .flat_map(|ch| ch.v_od.iter())
            .map(|v| (v - v_ref).abs())
            .fold(0.0, f64::max);

        Ok(Self {
            settled: settling_time.iter().all(Option::is_some),
            settling_time,
            settling_band: band,
            final_voltage_error,
            total_messages,
            peak_voltage_deviation,
            t_activate: log.t_activate,
            t_end: log.time.last().copied().unwrap_or(0.0),
            v_ref,
            max_kcl_residual,
            max_power_residual,
            equilibrium_residual,
            warnings: log.warnings.clone(),
        })
    }

    /// Longest settling time measured from activation.
    pub fn max_settling_duration(&self) -> Option<f64> {
        self.settling_time
            .iter()
            .map(|t| t.map(|t| t - self.t_activate))
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    }
}

/// Earliest logged time at or after activation from which `channel` stays
/// within `target ± band` through the end of the log. `Ok(None)` means the
/// channel is outside the band at the last sample.
pub fn settling_time(
    log: &TimeSeriesLog,
    channel: &str,
    target: f64,
    band: f64,
) -> Result<Option<f64>, SimError> {
    if !(band > 0.0) {
        return Err(SimError::InvalidBand(band));
    }
    let series = log
        .channel(channel)
        .ok_or_else(|| SimError::UnknownChannel(channel.to_string()))?;
    let start = log
        .time
        .iter()
        .position(|&t| t >= log.t_activate - 1e-12)
        .unwrap_or(log.time.len());
    let outside = (start..series.len())
        .rev()
        .find(|&k| (series[k] - target).abs() > band);
    Ok(match outside {
        None => Some(log.t_activate),
        Some(k) if k + 1 == series.len() => None,
        Some(k) => Some(log.time[k + 1]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// False when either run failed to settle or the ratio is undefined.
    pub conclusive: bool,
    /// Global over zonal maximum settling duration after activation.
    pub settling_ratio: Option<f64>,
    /// Global over zonal total messages.
    pub message_ratio: Option<f64>,
    pub zonal_settling: Option<f64>,
    pub global_settling: Option<f64>,
    pub zonal_messages: u64,
    pub global_messages: u64,
    pub zonal_final_error: Vec<f64>,
    pub global_final_error: Vec<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if num == den {
        Some(1.0)
    } else if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

pub fn compare_runs(zonal: &RunMetrics, global: &RunMetrics) -> Comparison {
    let zonal_settling = zonal.max_settling_duration();
    let global_settling = global.max_settling_duration();
    let settling_ratio = match (zonal_settling, global_settling) {
        (Some(z), Some(g)) => ratio(g, z),
        _ => None,
    };
    Comparison {
        conclusive: zonal.settled && global.settled && settling_ratio.is_some(),
        settling_ratio,
        message_ratio: ratio(global.total_messages as f64, zonal.total_messages as f64),
        zonal_settling,
        global_settling,
        zonal_messages: zonal.total_messages,
        global_messages: global.total_messages,
        zonal_final_error: zonal.final_voltage_error.clone(),
        global_final_error: global.final_voltage_error.clone(),
    }
}
