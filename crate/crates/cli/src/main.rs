use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use kt_career::pipeline::{self, RunConfig};
use kt_career::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "kt-career", version, about = "Knowledge-tracing features for STEM career prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled cohort
    Generate(Common),
    /// Train the DKT and DKT+ networks
    TrainKt(Common),
    /// Extract last knowledge states and feature tables
    Extract(Common),
    /// Grid-search and fit every classifier on every feature set
    TrainPredictor(Common),
    /// Write the evaluation report
    Evaluate(Common),
    /// Write group comparison tables
    Analyze(Common),
    /// Run every stage in order
    Run(Common),
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Generate(c)
            | Command::TrainKt(c)
            | Command::Extract(c)
            | Command::TrainPredictor(c)
            | Command::Evaluate(c)
            | Command::Analyze(c)
            | Command::Run(c) => c,
        }
    }
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn run(command: &Command) -> anyhow::Result<()> {
    let config = load_config(command.common())?;
    match command {
        Command::Generate(_) => pipeline::generate(&config).map(drop),
        Command::TrainKt(_) => pipeline::train_kt(&config).map(drop),
        Command::Extract(_) => pipeline::extract(&config).map(drop),
        Command::TrainPredictor(_) => pipeline::train_predictor(&config).map(drop),
        Command::Evaluate(_) => pipeline::evaluate(&config).map(drop),
        Command::Analyze(_) => pipeline::analyze(&config).map(drop),
        Command::Run(_) => pipeline::run_all(&config),
    }?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Numerical) => 2,
        Some(ErrorKind::Dependency) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
