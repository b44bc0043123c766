//! `amfnet`: synthetic data generation, training, LOSO evaluation, modality
//! ablation, annotation checks and gradient checking.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use amfnet::fusion::Modality;
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, UsageError};

#[derive(Parser)]
#[command(
    name = "amfnet",
    version,
    about = "Asymmetric audio-visual fusion for micro-expression recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_modality)]
    modality: Option<Modality>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a spec file.
    Gen {
        /// Synthetic spec (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `seed` in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model on the whole dataset and save a checkpoint.
    Train(RunArgs),
    /// Leave-one-subject-out evaluation of one modality.
    Eval(RunArgs),
    /// Visual, audio and fused LOSO runs over one shared fold plan.
    Ablate(RunArgs),
    /// Inter-annotator agreement between two annotation files.
    Iaa {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Class distribution and annotation validation.
    Stats {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Run configuration; a small built-in problem when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_modality)]
        modality: Option<Modality>,
        /// Number of samples in the checked batch.
        #[arg(long, default_value_t = 2)]
        samples: usize,
        /// Check at most this many coordinates per parameter.
        #[arg(long)]
        max_coords: Option<usize>,
    },
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    s.parse().map_err(|e: amfnet::Error| e.to_string())
}

fn resolve(a: RunArgs) -> anyhow::Result<config::Resolved> {
    RunConfig::load(&a.config)?.resolve(a.seed, a.out, a.modality)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Gen { config, out, seed } => commands::gen(&config, &out, seed)?,
        Command::Train(a) => commands::train(resolve(a)?)?,
        Command::Eval(a) => commands::eval(resolve(a)?)?,
        Command::Ablate(a) => commands::ablate(resolve(a)?)?,
        Command::Iaa { first, second, out } => commands::iaa(&first, &second, out.as_deref())?,
        Command::Stats {
            config,
            manifest,
            annotations,
        } => commands::stats(
            config.as_deref(),
            manifest.as_deref(),
            annotations.as_deref(),
        )?,
        Command::Gradcheck {
            config,
            seed,
            modality,
            samples,
            max_coords,
        } => {
            return commands::gradcheck(commands::GradCheckArgs {
                config,
                seed,
                samples,
                max_coords,
                modality,
            })
        }
    }
    Ok(true)
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || e.downcast_ref::<amfnet::Error>()
                .is_some_and(amfnet::Error::is_validation)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_validation(&err) { 2 } else { 1 })
        }
    }
}
