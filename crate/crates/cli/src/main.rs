//! orgsim: simulate a design department and write the results as CSV.
//!
//! Exit codes: 0 success, 1 domain failure (bad config, failed run),
//! 2 usage error. Diagnostics go to stderr; data goes to files only.

mod files;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use orgsim_core::calibration::{calibrate_search, path_to_pointer, ParamDef, TargetSpec, DEFAULT_TOP_K};
use orgsim_core::config::{self, ScenarioConfig};
use orgsim_core::design_dept::{charts, RunOptions};
use orgsim_core::experiment::{compare_paired, run_replications, ReplicationPlan};

#[derive(Parser)]
#[command(name = "orgsim", version, about = "Event-driven simulator of a design department")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications of one scenario and write run_summary.csv
    Run(RunArgs),
    /// Re-run the scenario over a grid of parameter values
    Sweep(SweepArgs),
    /// Compare two scenarios replication-by-replication
    Compare(CompareArgs),
    /// Search a parameter space for the best match to target metrics
    Calibrate(CalibrateArgs),
    /// Check a scenario file and list every defect
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario configuration file
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Base seed; replication seeds derive from it
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of replications
    #[arg(long, default_value_t = 1, value_name = "N")]
    replications: usize,
    /// Override the configured horizon (hours)
    #[arg(long, value_name = "HOURS")]
    horizon: Option<f64>,
    /// Output directory (default ./out, or $ORGSIM_OUT when set)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also write agent_trace.csv (attribute samples, first replication)
    #[arg(long)]
    trace: bool,
    /// Also write events.log (one line per processed event)
    #[arg(long)]
    events_log: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid file: JSON array of {"path", "values"} dimensions
    #[arg(long, value_name = "PATH")]
    sweep: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scenario to compare against --config
    #[arg(long = "config-b", value_name = "PATH")]
    config_b: PathBuf,
    /// Significance level of the difference intervals
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Targets file: JSON {"params": [...], "targets": [...], "top_k"?}
    #[arg(long, value_name = "PATH")]
    targets: PathBuf,
    /// Total number of candidate evaluations
    #[arg(long, value_name = "N")]
    budget: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario configuration file
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn load_config(path: &Path, horizon: Option<f64>) -> Result<ScenarioConfig> {
    let mut config = config::load(path)?;
    if let Some(h) = horizon {
        if !h.is_finite() || h <= 0.0 {
            bail!("--horizon must be a positive number of hours, got {h}");
        }
        config.horizon = h;
    }
    Ok(config)
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("ORGSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("./out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn wrote(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = load_config(&args.common.config, args.common.horizon)?;
    let plan = ReplicationPlan::new(args.common.replications, args.common.seed);
    let options = RunOptions { trace: args.trace, events_log: args.events_log };
    let records = run_replications(&config, plan, options)?;

    let dir = out_dir(&args.common)?;
    wrote(&files::write_atomic(&dir.join("run_summary.csv"), &files::run_summary(&records))?);
    if args.trace {
        wrote(&files::write_atomic(&dir.join("agent_trace.csv"), &files::agent_trace(&records[0]))?);
    }
    if args.events_log {
        wrote(&files::write_atomic(&dir.join("events.log"), &files::events_log(&records))?);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDim {
    path: String,
    values: Vec<f64>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let config = load_config(&args.common.config, args.common.horizon)?;
    let text = fs::read_to_string(&args.sweep)
        .with_context(|| format!("reading {}", args.sweep.display()))?;
    let dims: Vec<SweepDim> = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.sweep.display()))?;
    if dims.is_empty() {
        bail!("sweep file declares no dimensions");
    }
    for dim in &dims {
        if dim.values.is_empty() {
            bail!("sweep dimension {} has no values", dim.path);
        }
    }

    // Cross product in file order, last dimension fastest.
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for dim in &dims {
        grid = grid
            .iter()
            .flat_map(|prefix| {
                dim.values.iter().map(|v| {
                    let mut point = prefix.clone();
                    point.push(*v);
                    point
                })
            })
            .collect();
    }

    let base = serde_json::to_value(&config).context("serialising the base config")?;
    let plan = ReplicationPlan::new(args.common.replications, args.common.seed);
    let mut points = Vec::with_capacity(grid.len());
    for (index, values) in grid.iter().enumerate() {
        let mut doc = base.clone();
        for (dim, value) in dims.iter().zip(values) {
            let slot = doc
                .pointer_mut(&path_to_pointer(&dim.path))
                .with_context(|| format!("sweep path {} not found in the config", dim.path))?;
            *slot = serde_json::json!(value);
        }
        let point_config = config::parse_str(&doc.to_string())
            .with_context(|| format!("grid point {index} is not a valid scenario"))?;
        let records = run_replications(&point_config, plan, RunOptions::default())?;
        points.push((values.clone(), records));
    }

    let paths: Vec<String> = dims.into_iter().map(|d| d.path).collect();
    let dir = out_dir(&args.common)?;
    wrote(&files::write_atomic(&dir.join("sweep_summary.csv"), &files::sweep_summary(&paths, &points))?);
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let config_a = load_config(&args.common.config, args.common.horizon)?;
    let config_b = load_config(&args.config_b, args.common.horizon)?;
    let plan = ReplicationPlan::new(args.common.replications, args.common.seed);
    let comparison =
        compare_paired(&config_a, &config_b, plan, args.alpha, RunOptions::default())?;

    let dir = out_dir(&args.common)?;
    wrote(&files::write_atomic(
        &dir.join("compare_summary.csv"),
        &files::compare_summary(&comparison),
    )?);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationSpec {
    params: Vec<ParamDef>,
    targets: Vec<TargetSpec>,
    #[serde(default)]
    top_k: Option<usize>,
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let config = load_config(&args.common.config, args.common.horizon)?;
    let text = fs::read_to_string(&args.targets)
        .with_context(|| format!("reading {}", args.targets.display()))?;
    let spec: CalibrationSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.targets.display()))?;

    let candidates = calibrate_search(
        &config,
        &spec.params,
        &spec.targets,
        args.budget,
        args.common.replications,
        args.common.seed,
        spec.top_k.unwrap_or(DEFAULT_TOP_K),
    )?;
    if let Some(best) = candidates.first() {
        eprintln!("best discrepancy {:.9} at {:?}", best.discrepancy, best.params);
    }

    let param_order: Vec<String> = spec.params.iter().map(|p| p.path.clone()).collect();
    let dir = out_dir(&args.common)?;
    wrote(&files::write_atomic(
        &dir.join("calibration_report.csv"),
        &files::calibration_report(&param_order, &candidates),
    )?);
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let config = config::load(&args.config)?;

    // The role charts depend on the configured constants; prove they are
    // structurally sound for exactly these values.
    let mut defects = Vec::new();
    for (name, chart) in [
        ("designer", charts::designer_chart(&config.constants)),
        ("supervisor", charts::supervisor_chart(&config.constants)),
        ("manager", charts::manager_chart()),
    ] {
        for defect in chart.validate() {
            defects.push(format!("{name} chart: {defect}"));
        }
    }
    if !defects.is_empty() {
        bail!("invalid charts:\n  {}", defects.join("\n  "));
    }

    eprintln!("{} is valid", args.config.display());
    Ok(())
}
