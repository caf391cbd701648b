//! `etc` command line: `simulate`, `table`, `check`, `figure`.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration error, 3 runtime failure.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use crate::checks::{run_checks, CheckReport};
use crate::config::{ConfigError, RunConfig};
use crate::export::{self, TABLE_HEADER};
use crate::plant::{EventSystem, Plant};
use crate::sim::simulate;
use crate::stats::{circle_initial_conditions, figure_series, run_table_with, BatchSpec, GeneratorSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "etc", version, about = "Event-triggered control simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One run; writes trajectory.csv and executions.csv.
    Simulate(CommonArgs),
    /// Inter-execution statistics for every generator of the grid; writes table.csv.
    Table(CommonArgs),
    /// Invariant suite; writes check_failures.toml when something fails.
    Check(CommonArgs),
    /// V and W series for the figure generators; one CSV per generator.
    Figure(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (default: `[output] dir`, else `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Replace one config value, e.g. `sigma=0.5` or `sim.dt=5e-5`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for the random-state checks.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

struct Context {
    cfg: RunConfig,
    plant: Plant,
    out: PathBuf,
}

fn load(args: &CommonArgs) -> Result<Context, CliError> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("check.seed={seed}"));
    }
    let cfg = RunConfig::load(&args.config, &overrides)?;
    cfg.sim
        .validate()
        .map_err(|e| ConfigError::Invalid("[sim]", e.to_string()))?;
    let plant = cfg.plant.build().map_err(ConfigError::from)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    Ok(Context { cfg, plant, out })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(ConfigError::Invalid("--jobs", "must be at least 1".into()).into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(args)?;
    let spec = ctx
        .cfg
        .generator
        .clone()
        .ok_or(ConfigError::MissingSection("generator"))?;
    let x0 = ctx.cfg.initial.single(ctx.plant.dim())?;
    let gen = spec
        .build(ctx.plant.kappa())
        .map_err(|e| ConfigError::Invalid("[generator]", e.to_string()))?;
    let traj = simulate(&ctx.plant, &gen, &x0, &ctx.cfg.sim)
        .map_err(|e| CliError::Runtime(format!("simulation failed: {e}")))?;

    let tp = ctx.out.join("trajectory.csv");
    fs::write(&tp, export::trajectory_csv(&traj)).map_err(|e| io_err(&tp, e))?;
    let ep = ctx.out.join("executions.csv");
    fs::write(&ep, export::execution_times_csv(&traj)).map_err(|e| io_err(&ep, e))?;

    let gaps = traj.inter_execution_times();
    let events = gaps.len();
    let (min, mean) = if events == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (
            gaps.iter().copied().fold(f64::INFINITY, f64::min),
            gaps.iter().sum::<f64>() / events as f64,
        )
    };
    println!("generator: {}", spec.label());
    println!("x0: {x0:?}");
    println!("status: {}", traj.status.as_str());
    println!("events: {events}");
    println!("min inter-execution time: {min:.6e} s");
    println!("mean inter-execution time: {mean:.6e} s");
    println!(
        "final V: {:.6e}",
        traj.v_values.last().copied().unwrap_or(f64::NAN)
    );
    println!("wrote {} and {}", tp.display(), ep.display());
    Ok(())
}

/// Writes rows into `table.csv.partial` as they complete and renames it to
/// `table.csv` once every row is in.
pub fn cmd_table(args: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(args)?;
    let generators = ctx.cfg.table_generators();
    if generators.is_empty() {
        return Err(ConfigError::Invalid(
            "table grid",
            "needs [[grid]] entries or a [sweep] block".into(),
        )
        .into());
    }
    let batch = BatchSpec {
        initial_conditions: ctx.cfg.initial.set(ctx.plant.dim())?,
        plant: ctx.plant,
        generators,
        sim: ctx.cfg.sim,
        monitor: false,
    };
    let final_path = ctx.out.join("table.csv");
    let partial = ctx.out.join("table.csv.partial");
    let mut file = File::create(&partial).map_err(|e| io_err(&partial, e))?;
    writeln!(file, "{TABLE_HEADER}").map_err(|e| io_err(&partial, e))?;
    file.flush().map_err(|e| io_err(&partial, e))?;

    let total = batch.generators.len();
    let mut write_err = None;
    let rows = with_pool(args.jobs, || {
        run_table_with(&batch, |i, row| {
            let line = export::table_row(row);
            if write_err.is_none() {
                if let Err(e) = writeln!(file, "{line}").and_then(|_| file.sync_data()) {
                    write_err = Some(e);
                }
            }
            let summary = match &row.stats {
                Ok(s) => format!("mean {:.4} s, cv {:.4}, {} gaps", s.mean, s.cv, s.count),
                Err(e) => format!("FAILED: {e}"),
            };
            eprintln!("[{}/{}] {}: {}", i + 1, total, row.spec.label(), summary);
        })
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&partial, e));
    }
    drop(file);
    fs::rename(&partial, &final_path).map_err(|e| io_err(&final_path, e))?;
    println!("wrote {} ({} rows)", final_path.display(), rows.len());
    let failed = rows.iter().filter(|r| r.stats.is_err()).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} cell(s) failed")));
    }
    Ok(())
}

fn print_report(report: &CheckReport) {
    for o in &report.outcomes {
        println!(
            "{:<5} {:<18} cases {:>6}  margin {:+.3e}",
            if o.passed() { "PASS" } else { "FAIL" },
            o.name,
            o.cases,
            o.margin
        );
        for w in o.witnesses.iter().take(3) {
            println!("      {} x0={:?} eta0={} : {}", w.generator, w.x0, w.eta0, w.detail);
        }
        if o.witnesses.len() > 3 {
            println!("      ... {} more", o.witnesses.len() - 3);
        }
    }
}

#[derive(serde::Serialize)]
struct FailureFile<'a> {
    failure: Vec<&'a crate::checks::Witness>,
}

pub fn cmd_check(args: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(args)?;
    let spec = ctx.cfg.check.clone().unwrap_or_default();
    let dim = ctx.plant.dim();
    let initial = if dim == 2 {
        circle_initial_conditions(spec.radius, spec.trajectories, dim)
            .map_err(|e| ConfigError::Invalid("[check]", e.to_string()))?
    } else {
        ctx.cfg.initial.set(dim)?
    };
    info!("check seed {}", spec.seed);
    let report = with_pool(args.jobs, || run_checks(&ctx.plant, &spec, &initial, &ctx.cfg.sim))?;
    print_report(&report);
    let path = ctx.out.join("check_failures.toml");
    if report.passed() {
        if path.exists() {
            fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
        }
        println!("all checks passed (seed {})", spec.seed);
        Ok(())
    } else {
        let file = FailureFile {
            failure: report.witnesses().collect(),
        };
        let text = toml::to_string(&file).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        println!("failing inputs written to {}", path.display());
        Err(CliError::CheckFailed(
            report.outcomes.iter().filter(|o| !o.passed()).count(),
        ))
    }
}

pub fn cmd_figure(args: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(args)?;
    let fig = ctx.cfg.figure.clone().unwrap_or_default();
    let x0 = ctx.cfg.initial.single(ctx.plant.dim())?;
    let generators: Vec<GeneratorSpec> = fig.generators();
    let series = with_pool(args.jobs, || {
        figure_series(&ctx.plant, ctx.plant.kappa(), &generators, &x0, &ctx.cfg.sim)
    })?
    .map_err(|e| CliError::Runtime(format!("figure run failed: {e}")))?;
    for s in &series {
        let stem = format!("figure_{}", s.spec.label());
        export::write_trajectory(&ctx.out, &stem, &s.trajectory).map_err(|e| io_err(&ctx.out, e))?;
        println!("wrote {}", ctx.out.join(format!("{stem}.csv")).display());
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Table(a) => cmd_table(a),
        Command::Check(a) => cmd_check(a),
        Command::Figure(a) => cmd_figure(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
