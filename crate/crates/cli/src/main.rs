//! `mvn`: dataset generation, room simulation, training, evaluation and
//! plotting for the multi-view speech detector.

mod commands;
mod config;
mod failure;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "mvn", version, about = "Multi-view speech detection experiments")]
struct Cli {
    /// TOML run configuration (`version = 1`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores); overrides the configured value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `section.key=value` override, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write dataset manifests (and optionally the mixtures as WAV).
    GenData,
    /// Sample room scenes and write them as scene files.
    Simulate,
    /// Train a model; writes model.ckpt, state.ckpt and curve.csv.
    Train {
        /// Continue from a state.ckpt written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Channel-count sweeps; writes report.csv and aggregate.csv.
    Eval {
        /// Model checkpoint, optionally `PATH:KIND` to evaluate a per-channel
        /// network as avg_output or max_output. Repeatable.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<String>,
    },
    /// One SVG chart per scheme from report CSVs.
    Plot {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::new("io", format!("cannot write {}: {e}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::new("io", format!("cannot create {}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Plot { reports } = &cli.command {
        prepare_out(&cli.out)?;
        return commands::plot_cmd(reports, &cli.out);
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if cfg.jobs > 0 {
        mvn_core::exec::set_threads(cfg.jobs);
    }
    prepare_out(&cli.out)?;
    match &cli.command {
        Command::GenData => {
            commands::gen_data(&cfg, &cli.out)?;
            cfg.write_resolved(&cli.out)
        }
        Command::Simulate => {
            commands::simulate(&cfg, &cli.out)?;
            cfg.write_resolved(&cli.out)
        }
        Command::Train { resume } => commands::train_cmd(&cfg, &cli.out, resume.as_deref()),
        Command::Eval { checkpoints } => commands::eval_cmd(&cfg, &cli.out, checkpoints),
        Command::Plot { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
