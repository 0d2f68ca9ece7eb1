use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use iu4rec::pipeline::{Command, Pipeline, PipelineConfig};

/// Interest-unit recommendation pipeline on a synthetic marketplace.
#[derive(Parser, Debug)]
#[command(name = "iu4rec", version, about)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the base seed and any per-step seed overrides.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Generate the catalog, users and interaction log.
    Synth,
    /// Construct interest units from the catalog.
    BuildIu,
    /// Build training samples, vocabulary and daily unit statistics.
    Featurize,
    /// Train every configured model and write checkpoints.
    Train,
    /// Score the held-out day and write report.json.
    Eval,
    /// Serve the configured model in the two-stage simulator.
    Simulate,
    /// Compare two models in a simulated online experiment.
    AbTest,
    /// Run every step in order.
    All,
    /// Print the effective configuration as TOML.
    Config,
}

fn init_logging() {
    let level = std::env::var("IU4REC_LOG").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    if let Cmd::Config = cli.cmd {
        print!("{}", toml::to_string(&cfg).context("serializing config")?);
        return Ok(());
    }
    let pipeline = Pipeline::new(cfg, &cli.out)?;
    log::info!("config digest {}", pipeline.digest());
    let cmd = match cli.cmd {
        Cmd::Synth => Command::Synth,
        Cmd::BuildIu => Command::BuildIu,
        Cmd::Featurize => Command::Featurize,
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Simulate => Command::Simulate,
        Cmd::AbTest => Command::AbTest,
        Cmd::All => return Ok(pipeline.run_all()?),
        Cmd::Config => unreachable!("handled above"),
    };
    Ok(pipeline.run(cmd)?)
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
