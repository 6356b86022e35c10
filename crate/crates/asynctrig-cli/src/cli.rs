use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use asynctrig::linalg::{to_rows, zoh_pair};
use asynctrig::partition::make_partition;
use asynctrig::{avg_idle_metric, enumerate_horizons, prepare, Scenario, SimTrace};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{RunConfig, SEED_ENV};
use crate::error::{CliError, Result};
use crate::output::{self, PartitionReport, Summary};
use crate::presets::Preset;

#[derive(Parser, Debug)]
#[command(name = "asynctrig", version, about = "Self-triggered sensor scheduling with asynchronous measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment (online-unperturbed, offline-unperturbed, online-perturbed, offline-perturbed)
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Tie-break seed; overrides ASYNCTRIG_SEED and the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the sampled pair (A_T, B_T)
    Discretize {
        #[command(flatten)]
        source: Source,
        /// Sampling period; defaults to the configured one
        #[arg(long)]
        t: Option<f64>,
    },
    /// Enumerate horizons with their average-idle metric, one per line
    Horizons {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        lmin: usize,
        #[arg(long)]
        lmax: usize,
        #[arg(long, default_value_t = asynctrig::horizon::DEFAULT_CAP)]
        cap: usize,
    },
    /// Synthesize the certificate and print it as JSON
    Synthesize {
        #[command(flatten)]
        source: Source,
        /// Write the JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the conic partition (and the horizon table for offline modes)
    Partition {
        #[arg(long, conflicts_with_all = ["dim", "regions"])]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["config", "dim", "regions"])]
        preset: Option<String>,
        #[arg(long, requires = "regions")]
        dim: Option<usize>,
        #[arg(long, requires = "dim")]
        regions: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and print the summary; with --out also write the trace CSV
    Simulate(RunArgs),
    /// Simulate and write CSV, JSON and SVG plots
    Report(RunArgs),
    /// Run a built-in experiment
    Preset {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_source(config: Option<&Path>, preset: Option<&str>) -> Result<(RunConfig, Option<Preset>)> {
    match (config, preset) {
        (Some(path), None) => Ok((RunConfig::load(path)?, None)),
        (None, Some(name)) => {
            let p: Preset = name.parse()?;
            Ok((p.config(), Some(p)))
        }
        _ => Err(CliError::Config("give exactly one of --config or --preset".into())),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|e| CliError::io("<stdout>", e))
}

fn write_or_print<T: Serialize>(out: &mut dyn Write, path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => output::write_json(p, value),
        None => print_json(out, value),
    }
}

#[derive(Serialize)]
struct Discretized {
    t: f64,
    a_t: Vec<Vec<f64>>,
    b_t: Vec<Vec<f64>>,
}

/// Prepared scenario and trace of one configured run.
pub struct Run {
    pub config: RunConfig,
    pub preset: Option<Preset>,
    pub scenario: Scenario,
    pub trace: SimTrace,
    pub summary: Summary,
}

/// Applies the seed precedence, synthesises and simulates.
pub fn execute(mut config: RunConfig, preset: Option<Preset>, seed: Option<u64>, env_seed: Option<&str>) -> Result<Run> {
    config.apply_seed(seed, env_seed)?;
    let scenario = prepare(&config.to_sim_config())?;
    let trace = scenario.run();
    let summary = Summary::new(
        &scenario,
        &trace,
        config.simulation.seed,
        preset.map(|p| (p.name(), p.reported_reduction())),
    );
    Ok(Run { config, preset, scenario, trace, summary })
}

fn finish_run(out: &mut dyn Write, run: &Run, dir: Option<&Path>, plots: bool) -> Result<()> {
    if let Some(dir) = dir.or(run.config.output.dir.as_deref()) {
        output::write_run(dir, &run.config, &run.scenario, &run.trace, &run.summary, plots)?;
    }
    print_json(out, &run.summary)
}

fn dispatch(cli: Cli, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Discretize { source, t } => {
            let (config, _) = load_source(source.config.as_deref(), source.preset.as_deref())?;
            let t = t.unwrap_or(config.discretization.t);
            let (a_t, b_t) = zoh_pair(&config.plant.a, &config.plant.b, t)?;
            print_json(out, &Discretized { t, a_t: to_rows(&a_t), b_t: to_rows(&b_t) })
        }
        Command::Horizons { m, lmin, lmax, cap } => {
            for h in enumerate_horizons(m, lmin, lmax, cap)? {
                writeln!(out, "{h} {}", avg_idle_metric(&h, m)).map_err(|e| CliError::io("<stdout>", e))?;
            }
            Ok(())
        }
        Command::Synthesize { source, out: path } => {
            let (config, _) = load_source(source.config.as_deref(), source.preset.as_deref())?;
            let scenario = prepare(&config.to_sim_config())?;
            write_or_print(out, path.as_deref(), &scenario.policy.certificate())
        }
        Command::Partition { config, preset, dim, regions, out: path } => {
            let report = match (dim, regions) {
                (Some(dim), Some(n)) => PartitionReport { dim, regions: make_partition(dim, n)?, table: None },
                _ => {
                    let (config, _) = load_source(config.as_deref(), preset.as_deref())?;
                    if config.mode.is_offline() {
                        let scenario = prepare(&config.to_sim_config())?;
                        PartitionReport::from_scenario(&scenario).expect("offline scenario has regions")
                    } else {
                        let n = config.partition.regions;
                        if n == 0 {
                            return Err(CliError::Config("partition.regions must be positive".into()));
                        }
                        let dim = 2 * config.plant.n();
                        PartitionReport { dim, regions: make_partition(dim, n)?, table: None }
                    }
                }
            };
            write_or_print(out, path.as_deref(), &report)
        }
        Command::Simulate(args) => {
            let (config, preset) = load_source(args.source.config.as_deref(), args.source.preset.as_deref())?;
            let run = execute(config, preset, args.seed, env_seed)?;
            finish_run(out, &run, args.out.as_deref(), false)
        }
        Command::Report(args) => {
            let (config, preset) = load_source(args.source.config.as_deref(), args.source.preset.as_deref())?;
            if args.out.is_none() && config.output.dir.is_none() {
                return Err(CliError::Config("report needs --out or output.dir".into()));
            }
            let run = execute(config, preset, args.seed, env_seed)?;
            finish_run(out, &run, args.out.as_deref(), true)
        }
        Command::Preset { name, seed, out: dir } => {
            let preset: Preset = name.parse()?;
            let run = execute(preset.config(), Some(preset), seed, env_seed)?;
            finish_run(out, &run, dir.as_deref(), true)
        }
    }
}

/// Runs the command line with explicit streams and seed environment.
pub fn run_with<I, T>(argv: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, env_seed, out) {
        Ok(()) => 0,
        // downstream closed the pipe (`| head`); not an error
        Err(CliError::Io { ref source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point: reads `ASYNCTRIG_SEED` and uses the process streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, env_seed.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}
