//! `fas`: deterministic training, evaluation, and dataset tooling for the
//! acoustic-semantic fusion classifier.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fas_cli::commands::{
    cmd_eval, cmd_gradcheck, cmd_inspect, cmd_sweep, cmd_synth, cmd_train, parse_split, Ctx,
};
use fas_cli::error::{CliError, Result};
use fas_cli::runconfig::RunConfigFile;
use fas_core::config::Variant;

#[derive(Parser)]
#[command(name = "fas", version, about = "Acoustic-semantic fusion emotion classifier")]
struct Cli {
    /// Override the seed in the train and synth sections.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run-configuration file (JSON); defaults apply for absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Suppress informational terminal output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic conflict dataset (manifest + feature files).
    Synth,
    /// Train a model and write checkpoint plus history files.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Override the configured model variant.
        #[arg(long)]
        variant: Option<String>,
        /// Print the trainable-parameter count and exit.
        #[arg(long)]
        print_params: bool,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Finite-difference gradient check of all variants (tiny configs only).
    Gradcheck,
    /// Train and evaluate every cell of the configured ablation grid.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print header fields of a .fasf file, checkpoint, or manifest.
    Inspect { path: PathBuf },
}

fn check_threads_env() -> Result<()> {
    if let Ok(v) = std::env::var("FAS_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {} // all work is currently single-threaded; 1 is a cap, not a change
            _ => {
                return Err(CliError::Config(format!(
                    "FAS_THREADS must be a positive integer, got '{v}'"
                )))
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    check_threads_env()?;
    let mut rc = match &cli.config {
        Some(path) => RunConfigFile::load(path)?,
        None => RunConfigFile::default(),
    };
    if let Some(seed) = cli.seed {
        rc.train.seed = seed;
        rc.synth.seed = seed;
    }
    let ctx = Ctx { out: cli.out, quiet: cli.quiet };
    match cli.cmd {
        Cmd::Synth => cmd_synth(&rc, &ctx),
        Cmd::Train { manifest, variant, print_params, resume } => {
            if let Some(v) = variant {
                rc.fas.variant = Variant::parse(&v)?;
            }
            cmd_train(&rc, &ctx, manifest.as_deref(), print_params, resume.as_deref())
        }
        Cmd::Eval { checkpoint, manifest, split } => {
            cmd_eval(&ctx, &checkpoint, &manifest, parse_split(&split)?)
        }
        Cmd::Gradcheck => cmd_gradcheck(&rc, &ctx),
        Cmd::Sweep { manifest } => cmd_sweep(&rc, &ctx, &manifest),
        Cmd::Inspect { path } => cmd_inspect(&path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
