//! `phaseglm`: simulation and theory front end for MLE existence in binary GLMs.

mod commands;
mod config;
mod dataset;
mod error;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::commands::RunContext;
use crate::config::{parse_override, Config, Profile};
use crate::error::{CliError, EXIT_RUNTIME};

const THREADS_ENV: &str = "PHASEGLM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "phaseglm", version, about = "Phase transitions for the existence of the MLE in binary GLMs")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides PHASEGLM_THREADS and run.threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Built-in defaults.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulated MLE-existence proportions over a (gamma0, kappa) grid.
    Sweep,
    /// Monte Carlo estimates of the threshold h_MLE.
    Hmle,
    /// Classify a labelled dataset CSV as overlap, quasi-complete or complete separation.
    Separate {
        /// CSV with a header and columns y, x1, ..., xp.
        dataset: PathBuf,
    },
    /// G-functions, the pG conditions, the Carleman reading and the univariate separation probability.
    Check,
    /// Moments of the projected covariate and Carleman partial sums.
    Moments,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Hmle => "hmle",
            Command::Separate { .. } => "separate",
            Command::Check => "check",
            Command::Moments => "moments",
        }
    }
}

fn resolve_threads(cli: &Cli, config: &Config) -> Result<usize, CliError> {
    let threads = match cli.threads {
        Some(t) => t,
        None => match std::env::var(THREADS_ENV) {
            Ok(raw) => raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, found {raw:?}")))?,
            Err(_) => match config.optional::<usize>("run.threads")? {
                Some(t) => t,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            },
        },
    };
    if threads == 0 {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(threads)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        overrides.push(("run.seed".into(), seed.to_string()));
    }
    if let Some(threads) = cli.threads {
        overrides.push(("run.threads".into(), threads.to_string()));
    }
    let config = Config::resolve(cli.profile, cli.config.as_deref(), &overrides)?;
    let seed = config.parse("run.seed")?;
    let threads = resolve_threads(&cli, &config)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::runtime(format!("cannot start {threads} worker threads: {e}")))?;
    let command = cli.command.name();
    if let Command::Separate { dataset } = &cli.command {
        return commands::separate(dataset, &config);
    }
    let ctx = RunContext { command, config, profile: cli.profile, seed, threads, out_dir: cli.out_dir, started: Instant::now() };
    match cli.command {
        Command::Sweep => commands::sweep(&ctx),
        Command::Hmle => commands::hmle(&ctx),
        Command::Check => commands::check(&ctx),
        Command::Moments => commands::moments(&ctx),
        Command::Separate { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = Cli::command()
        .after_long_help(config::key_table())
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal failure (see the message above)");
            ExitCode::from(EXIT_RUNTIME as u8)
        }
    }
}
