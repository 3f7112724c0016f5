//! The `clinlm` command line: one subcommand per stage plus `pipeline`,
//! all driven by a TOML run configuration (see [`config`]).
//!
//! Exit status is 0 on success, 2 for configuration errors (including
//! missing inputs found during pre-flight) and 3 when a stage fails.

pub mod config;
pub mod error;
pub mod fsio;
pub mod manifest;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, Stage};
pub use error::{CliError, Result};
pub use manifest::Manifest;
pub use stages::{run_pipeline, run_stage};

#[derive(Debug, Parser)]
#[command(name = "clinlm", version, about = "Train, align and evaluate small clinical language models")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the BPE tokenizer on the corpus.
    Tokenize,
    /// Pre-train a decoder from scratch.
    Pretrain,
    /// Supervised fine-tuning with LoRA adapters.
    Sft,
    /// Preference alignment of the SFT model.
    Dpo,
    /// Clean, deduplicate and assemble the training datasets.
    Data,
    /// Score prediction files and, optionally, the model on multiple choice.
    Eval,
    /// Run the stages listed in `pipeline`, in order.
    Pipeline,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let path =
        cli.config.as_ref().ok_or_else(|| CliError::Config("--config: a run configuration is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = std::path::absolute(dir).map_err(|e| CliError::Config(format!("--out-dir: {e}")))?;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let stage = match cli.command {
        Command::Tokenize => Stage::Tokenize,
        Command::Pretrain => Stage::Pretrain,
        Command::Sft => Stage::Sft,
        Command::Dpo => Stage::Dpo,
        Command::Data => Stage::Data,
        Command::Eval => Stage::Eval,
        Command::Pipeline => {
            if cfg.pipeline.is_empty() {
                log::info!("pipeline is empty; nothing to do");
            }
            run_pipeline(&cfg)?;
            return Ok(());
        }
    };
    run_stage(&cfg, stage)?;
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("clinlm: {e}");
            e.exit_code()
        }
    }
}
