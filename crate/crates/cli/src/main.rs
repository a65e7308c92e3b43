use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coexsim::{allocate, run_scenario, CliError, ExperimentConfig, Format, RunOptions, Table};

#[derive(Parser)]
#[command(name = "coexsim", version, about = "Scheduled/CSMA coexistence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in the config.
    Run {
        config: PathBuf,
        /// Output file; defaults to `sim.output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Worker threads for ensembles. Results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Print the proportional-fair allocation at every sweep point.
    Allocate {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn emit(table: &Table, cfg: &ExperimentConfig, format: Format, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    coexsim::output::write(table, &cfg.to_toml(), cfg.sim.seed, format, &mut *sink)?;
    sink.flush()?;
    if table.infeasible > 0 {
        return Err(CliError::Infeasible(table.infeasible));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            runs,
            jobs,
            format,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            if let Some(r) = runs {
                cfg.sim.runs = r;
            }
            if jobs == Some(0) {
                return Err(CliError::field("--jobs", "at least one worker"));
            }
            cfg.validate()?;
            let table = run_scenario(&cfg, RunOptions { jobs })?;
            let out = out.or_else(|| cfg.sim.output.clone());
            emit(&table, &cfg, format, out)
        }
        Command::Allocate { config, format } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = allocate(&cfg)?;
            emit(&table, &cfg, format, None)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {:?}, {} point(s)", cfg.sim.scenario, cfg.points()?.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
