//! `iad`: run the interaction-aware diffusion pipeline stage by stage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::Settings;

#[derive(Parser)]
#[command(name = "iad", version, about = "Interaction-aware diffusion modeling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate the raw log and categorize tokens.
    Ingest,
    /// PageRank, HITS and degree features per user.
    Features,
    /// Role distributions from a Gaussian mixture over the features.
    Roles,
    /// Topic and sentiment distributions per contagion.
    Topics,
    /// Explicit categories by co-training from the seed labels.
    Classify,
    /// Extract, filter and balance interacting scenarios.
    Scenarios,
    /// Fit the interaction model on all scenarios.
    Fit,
    /// Infection probabilities of the scenarios under the fitted model.
    Predict,
    /// Cross-validated comparison of models.
    Eval,
    /// Generate synthetic scenarios or a synthetic raw log.
    Synth,
    /// Write role, category and sentiment interaction matrices.
    ExportInteractions,
}

#[derive(Args)]
struct Options {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding the raw log, lexicon and seeds.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Attention window length.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Number of latent topics.
    #[arg(long, global = true)]
    topics: Option<usize>,
    /// Sentiment intensity threshold, or `none`.
    #[arg(long, global = true)]
    tau: Option<String>,
    /// `topic` or `topic_sentiment`.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Comma-separated model list for `eval`.
    #[arg(long, global = true)]
    models: Option<String>,
    /// Any other setting, as `key=value`; repeatable.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn settings(opts: &Options) -> Result<Settings, Failure> {
    let mut s = Settings::default();
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        s.apply_text(&text, path).map_err(Failure::Config)?;
    }
    let flags = [
        ("out", opts.out.as_ref().map(|p| p.display().to_string())),
        ("input", opts.input.as_ref().map(|p| p.display().to_string())),
        ("seed", opts.seed.map(|v| v.to_string())),
        ("k", opts.k.map(|v| v.to_string())),
        ("topics", opts.topics.map(|v| v.to_string())),
        ("tau", opts.tau.clone()),
        ("variant", opts.variant.clone()),
        ("models", opts.models.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, &v).map_err(Failure::Config)?;
        }
    }
    for kv in &opts.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("`--set {kv}` is not `key=value`")))?;
        s.set(key, value).map_err(Failure::Config)?;
    }
    s.validate().map_err(Failure::Config)?;
    Ok(s)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let s = settings(&cli.opts)?;
    std::fs::create_dir_all(&s.out).map_err(|e| Failure::Run(format!("{}: {e}", s.out.display())))?;
    match cli.command {
        Command::Ingest => commands::ingest(&s),
        Command::Features => commands::features(&s),
        Command::Roles => commands::roles(&s),
        Command::Topics => commands::topics(&s),
        Command::Classify => commands::classify(&s),
        Command::Scenarios => commands::scenarios(&s),
        Command::Fit => commands::fit_model(&s),
        Command::Predict => commands::predict(&s),
        Command::Eval => commands::eval(&s),
        Command::Synth => commands::synth(&s),
        Command::ExportInteractions => commands::export_interactions(&s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
