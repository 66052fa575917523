use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dampflow_cli::runner::{self, EXIT_CONFIG};
use dampflow_cli::{ExperimentConfig, Overrides};
use log::error;

/// Damped p-Laplace flow laboratory.
#[derive(Parser)]
#[command(name = "dampflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run one experiment per (p, a) pair of the [sweep] table.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Re-run the analysis on an existing history.csv.
    Verify {
        history: PathBuf,
        /// Write the verdict JSON here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Flags {
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of log-spaced samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Final time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Seed for randomized initial data.
    #[arg(long)]
    seed: Option<u64>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides { out: self.out.clone(), samples: self.samples, t_final: self.t_final, seed: self.seed }
    }
}

fn load(path: &Path, flags: &Flags) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&flags.overrides());
    let out = match &cfg.output.dir {
        Some(dir) => dir.clone(),
        None => {
            let stem = path.file_stem().context("config path has no file name")?;
            PathBuf::from("out").join(stem)
        }
    };
    Ok((cfg, out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, flags } => match load(&config, &flags) {
            Ok((cfg, out)) => runner::run_experiment(&cfg, &out).exit_code,
            Err(e) => {
                error!("{e:#}");
                EXIT_CONFIG
            }
        },
        Command::Sweep { config, flags } => match load(&config, &flags).and_then(|(cfg, out)| {
            let rows = runner::run_sweep(&cfg, &out)?;
            Ok(runner::sweep_exit_code(&rows))
        }) {
            Ok(code) => code,
            Err(e) => {
                error!("{e:#}");
                EXIT_CONFIG
            }
        },
        Command::Verify { history, out } => match verify(&history, out.as_deref()) {
            Ok(code) => code,
            Err(e) => {
                error!("{e:#}");
                EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}

fn verify(history: &Path, out: Option<&Path>) -> anyhow::Result<i32> {
    let report = runner::verify_history(history)?;
    match out {
        Some(path) => dampflow_cli::output::write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(runner::exit_code_for(report.verdict))
}
