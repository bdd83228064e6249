use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use mgsim::engine::{compare_runs, run_scenario};
use mgsim::output::{read_metrics, write_run};
use mgsim::scenario::{ScenarioFile, SimFile};
use mgsim::Preset;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Zonal,
    Global,
}

/// Simulate an islanded inverter microgrid with zonal secondary voltage control.
#[derive(Debug, Parser)]
#[command(name = "mgsim", version)]
struct Cli {
    /// Scenario document (JSON). Omitted keys take built-in defaults.
    #[arg(long, conflicts_with_all = ["preset", "compare"])]
    scenario: Option<PathBuf>,

    /// Bundled experiment. Defaults to `zonal` when no scenario is given.
    #[arg(long, value_enum, conflicts_with = "compare")]
    preset: Option<PresetArg>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the integration step, seconds.
    #[arg(long)]
    dt: Option<f64>,

    /// Override the simulated horizon, seconds.
    #[arg(long = "t-end")]
    t_end: Option<f64>,

    /// Compare two saved runs: zonal directory first, global second.
    #[arg(long, num_args = 2, value_names = ["ZONAL_DIR", "GLOBAL_DIR"])]
    compare: Option<Vec<PathBuf>>,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(dirs) = &cli.compare {
        let zonal = read_metrics(&dirs[0])?;
        let global = read_metrics(&dirs[1])?;
        let cmp = compare_runs(&zonal, &global);
        println!("{}", serde_json::to_string_pretty(&cmp)?);
        if !cmp.conclusive {
            eprintln!("comparison inconclusive: at least one run did not settle");
        }
        return Ok(());
    }

    let mut doc = match (&cli.scenario, cli.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read scenario file {}", path.display()))?;
            ScenarioFile::from_json(&text)
                .with_context(|| format!("in scenario file {}", path.display()))?
        }
        (None, Some(PresetArg::Global)) => Preset::Global.document(),
        (None, _) => Preset::Zonal.document(),
    };
    if cli.dt.is_some() || cli.t_end.is_some() {
        let sim = doc.sim.get_or_insert_with(SimFile::default);
        if cli.dt.is_some() {
            sim.dt = cli.dt;
        }
        if cli.t_end.is_some() {
            sim.t_end = cli.t_end;
        }
    }
    let resolved = doc.resolve()?;

    let started = std::time::Instant::now();
    let (log, metrics) = run_scenario(&resolved.scenario)?;
    let elapsed = started.elapsed();
    let files = write_run(&cli.out, &resolved, &log, &metrics)?;

    for w in &metrics.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "simulated {} s in {:.2} s wall time; settled: {}; messages: {}",
        resolved.scenario.t_end,
        elapsed.as_secs_f64(),
        metrics.settled,
        metrics.total_messages
    );
    for (k, (t, e)) in metrics
        .settling_time
        .iter()
        .zip(&metrics.final_voltage_error)
        .enumerate()
    {
        let t = t.map_or("not settled".to_string(), |t| format!("{t:.4} s"));
        println!("  DG{}: settling {t}, final error {e:+.4} V", k + 1);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
