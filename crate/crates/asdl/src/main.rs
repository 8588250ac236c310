use std::path::PathBuf;
use std::process::ExitCode;

use asdl::{AppError, ExperimentConfig, Pipeline, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asdl", version, about = "Active speaker detection and localization from a microphone array")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, env = "ASDL_CONFIG_FILE")]
    config: Option<PathBuf>,
    /// Overrides the training seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-scene work.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output root; overrides `paths.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Re-run stages even when their manifests are up to date.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render clean multichannel scenes with ground-truth labels.
    Simulate,
    /// Add noise and extract spatial features.
    Features,
    /// Build teacher labels and fused training targets.
    Labels,
    /// Train the student network.
    Train,
    /// Evaluate trained models on the test scenes.
    Eval,
    /// Verify manifests and tabulate every evaluated run.
    Report,
    /// Run all stages for every cell of the ablation sweep.
    Ablate,
    /// Run every stage for the configured cell.
    Run,
    /// Print the resolved configuration and its hash.
    Config,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let env = std::env::vars().filter(|(k, _)| k != "ASDL_CONFIG_FILE");
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), env)?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.paths.output = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load(&cli.common)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml_string());
        println!("# hash {}", cfg.hash());
        return Ok(());
    }
    let mut p = Pipeline::new(cfg, cli.common.workers)?;
    p.force = cli.common.force;
    tracing::info!(config = %p.cfg.short_hash(), out = %p.out.display(), "starting");
    match cli.command {
        Command::Simulate => p.simulate(),
        Command::Features => p.features(),
        Command::Labels => p.labels(),
        Command::Train => p.train(),
        Command::Eval => p.eval().map(|_| ()),
        Command::Report => p.report().map(|runs| print!("{}", asdl::pipeline::markdown_table(&runs))),
        Command::Ablate => asdl::ablation::ablate(&p).map(|runs| print!("{}", asdl::pipeline::markdown_table(&runs))),
        Command::Run => p.run_all().map(|runs| print!("{}", asdl::pipeline::markdown_table(&runs))),
        Command::Config => unreachable!(),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: &AppError = &e;
            ExitCode::from(code.exit_code() as u8)
        }
    }
}
