//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, ConfigError};
use crate::experiment::{self, aggregate, BatchError};
use crate::output::{format_float, RunTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Debug, Parser)]
#[command(
    name = "strategem",
    version,
    about = "IO vs RBV market-entry simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its per-cycle trace.
    Run(CommonArgs),
    /// Run a batch of seeded simulations and aggregate them.
    Batch(CommonArgs),
    /// Recompute aggregate.csv from an existing runs.csv.
    Aggregate {
        /// runs.csv to read (default: <out>/runs.csv).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a configuration and print the effective values.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run seed (`run`) or base seed (`batch`).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u32>,
    #[arg(long)]
    pub cycles: Option<u32>,
    #[arg(long)]
    pub firms: Option<u32>,
    #[arg(long)]
    pub markets: Option<u32>,
    /// Write per-cycle traces (always on for `run`).
    #[arg(long)]
    pub trace: bool,
    #[arg(long, env = "STRATEGEM_WORKERS")]
    pub workers: Option<usize>,
    /// Override any config field, e.g. `--set sim.noise_amplitude=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<BatchError> for Failure {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", context.display()))
}

/// Builds the effective configuration: file (or defaults), then `--set`
/// overrides, then the dedicated flags.
pub fn effective_config(args: &CommonArgs, seed_is_base: bool) -> Result<Config, ConfigError> {
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.apply_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        if seed_is_base {
            config.batch.base_seed = seed;
        } else {
            config.sim.rng_seed = seed;
        }
    }
    if let Some(n) = args.runs {
        config.batch.n_runs = n;
    }
    if let Some(n) = args.cycles {
        config.sim.n_cycles = n;
    }
    if let Some(n) = args.firms {
        config.sim.n_firms = n;
    }
    if let Some(n) = args.markets {
        config.sim.n_markets = n;
    }
    if let Some(n) = args.workers {
        config.batch.workers = n;
    }
    if args.trace {
        config.batch.trace = true;
    }
    config.validate()?;
    Ok(config)
}

fn prepare_out_dir(dir: &Path, config: &Config) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(runtime(dir))?;
    let path = dir.join(EFFECTIVE_CONFIG);
    fs::write(&path, config.to_toml_string()).map_err(runtime(&path))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
{
    let file = File::create(path).map_err(runtime(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(runtime(path))?;
    w.flush().map_err(runtime(path))
}

fn cmd_run(args: &CommonArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = effective_config(args, false)?;
    prepare_out_dir(&args.out, &config)?;
    let seed = config.sim.rng_seed;
    let trace = args.out.join("trace.csv");
    let summary = experiment::run_one_traced(0, seed, &config.sim, &trace)?;
    let table = experiment::summaries_to_table(
        &config.sim.checkpoint_cycles,
        std::slice::from_ref(&summary),
    );
    write_with(&args.out.join("runs.csv"), |w| table.write_csv(w))?;

    let _ = writeln!(
        out,
        "run seed {seed}: {} cycles, trace at {}",
        config.sim.n_cycles,
        trace.display()
    );
    for cp in &summary.checkpoints {
        let s = &cp.snapshot;
        let _ = writeln!(
            out,
            "  cycle {:>4}: top10 IO {} / RBV {}, best IO {} / RBV {}",
            cp.cycle,
            s.io.count_in_top,
            s.rbv.count_in_top,
            format_float(s.io.best),
            format_float(s.rbv.best)
        );
    }
    Ok(())
}

fn cmd_batch(args: &CommonArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = effective_config(args, true)?;
    prepare_out_dir(&args.out, &config)?;
    let trace_dir = config.batch.trace.then(|| args.out.join("traces"));
    if let Some(dir) = &trace_dir {
        fs::create_dir_all(dir).map_err(runtime(dir))?;
    }
    let started = std::time::Instant::now();
    let result = experiment::run_batch(&config.batch, &config.sim, trace_dir.as_deref())?;
    write_with(&args.out.join("runs.csv"), |w| result.table.write_csv(w))?;
    write_with(&args.out.join("aggregate.csv"), |w| {
        result.aggregate.write_csv(w)
    })?;

    let _ = writeln!(
        out,
        "{} runs in {:.1}s, outputs in {}",
        config.batch.n_runs,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    for c in &config.sim.checkpoint_cycles {
        let mean = |col: String| result.aggregate.get(&col).map_or(f64::NAN, |s| s.mean);
        let _ = writeln!(
            out,
            "  cycle {c:>4}: mean top10 IO {:.2} / RBV {:.2}, RBV leads {:.1}% of runs",
            mean(format!("top10_io_c{c}")),
            mean(format!("top10_rbv_c{c}")),
            100.0 * mean(format!("leader_rbv_c{c}")),
        );
    }
    Ok(())
}

fn cmd_aggregate(input: Option<&Path>, dir: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let input = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("runs.csv"));
    let file = File::open(&input).map_err(runtime(&input))?;
    let table = RunTable::read_csv(file)
        .map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    fs::create_dir_all(dir).map_err(runtime(dir))?;
    let path = dir.join("aggregate.csv");
    write_with(&path, |w| aggregate(&table).write_csv(w))?;
    let _ = writeln!(
        out,
        "aggregated {} runs into {}",
        table.rows.len(),
        path.display()
    );
    Ok(())
}

fn cmd_validate(args: &CommonArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = effective_config(args, true)?;
    let _ = write!(out, "{}", config.to_toml_string());
    Ok(())
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn parse_and_dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_CONFIG
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Batch(args) => cmd_batch(args, out),
        Command::Aggregate { input, out: dir } => cmd_aggregate(input.as_deref(), dir, out),
        Command::Validate(args) => cmd_validate(args, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            let _ = writeln!(
                err,
                "usage: strategem <run|batch|aggregate|validate> [--config PATH] [--out DIR] ..."
            );
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}
