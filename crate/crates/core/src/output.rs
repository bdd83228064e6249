//! Files written for each run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::engine::{RunMetrics, TimeSeriesLog};
use crate::scenario::{Resolved, ScenarioFile};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const RESOLVED_FILE: &str = "scenario_resolved.json";

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub metrics: RunMetrics,
    /// Keys that were filled from defaults.
    pub provenance: Vec<String>,
}

/// Writes the log as CSV: `t`, six channels per DG, then `msg_count`.
pub fn write_csv<W: Write>(log: &TimeSeriesLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(log.column_names())?;
    let mut row: Vec<String> = Vec::with_capacity(2 + 6 * log.dg.len());
    for k in 0..log.len() {
        row.clear();
        row.push(log.time[k].to_string());
        for ch in &log.dg {
            for series in [&ch.v_od, &ch.v_oq, &ch.p, &ch.q, &ch.omega, &ch.dv_n] {
                row.push(series[k].to_string());
            }
        }
        row.push(log.msg_count[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `timeseries.csv`, `metrics.json` and `scenario_resolved.json`
/// into `dir`, creating it if needed.
pub fn write_run(
    dir: &Path,
    resolved: &Resolved,
    log: &TimeSeriesLog,
    metrics: &RunMetrics,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join(TIMESERIES_FILE);
    let file =
        fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_csv(log, std::io::BufWriter::new(file))?;

    let metrics_path = dir.join(METRICS_FILE);
    let report = RunReport {
        metrics: metrics.clone(),
        provenance: resolved.provenance.clone(),
    };
    fs::write(&metrics_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", metrics_path.display()))?;

    let resolved_path = dir.join(RESOLVED_FILE);
    fs::write(
        &resolved_path,
        ScenarioFile::from_scenario(&resolved.scenario).to_json(),
    )
    .with_context(|| format!("writing {}", resolved_path.display()))?;
    Ok(vec![csv_path, metrics_path, resolved_path])
}

pub fn read_metrics(dir: &Path) -> Result<RunMetrics> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
