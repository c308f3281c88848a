use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use causal_transfer::experiment::config::SuiteConfig;
use causal_transfer::experiment::plot::emit_plots;
use causal_transfer::experiment::results::read_results;
use causal_transfer::experiment::suite::run_suite;
use causal_transfer::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Recovery-macro transfer experiments on grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the barrier x goal-scenario suite.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 lets rayon decide.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Regenerate figures from an existing results.csv.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: Option<&PathBuf>) -> Result<SuiteConfig> {
    match path {
        Some(p) => SuiteConfig::load(p),
        None => Ok(SuiteConfig::default_suite()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, seed, jobs } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let started = Instant::now();
            let output = run_suite(&cfg, jobs)?;
            output.write(&cfg.output_dir)?;
            eprintln!(
                "{} rows written to {} in {:.1}s",
                output.rows.len(),
                cfg.output_dir.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Plot { csv, out } => {
            let file = std::fs::File::open(&csv).map_err(|e| Error::io(&csv, e))?;
            let rows = read_results(file)?;
            for path in emit_plots(&rows, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = SuiteConfig::load(&config)?;
            cfg.validate()?;
            println!("ok {}", cfg.digest());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
