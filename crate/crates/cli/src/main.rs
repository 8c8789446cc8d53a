//! `p2t` — config-driven experiment runner for prompt-based tabular transfer
//! learning.
//!
//! Three subcommands:
//! - `p2t run <spec.json>`: run every (method, seed) cell the spec describes
//!   and print a human-readable table; optionally write the JSON report.
//! - `p2t dump-prompts <spec.json> <dir>`: write the exact prompt bytes a run
//!   would send, one file per query, with no network activity.
//! - `p2t cache <stats|prune|export>`: inspect or rewrite a completion cache
//!   file.
//!
//! Exit codes: 0 on success; 2 when a replay store is missing a completion or
//! the backend is unreachable; 3 on configuration problems (bad spec, bad
//! paths, budget exceeded); 1 for anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use p2t_core::backend::{BackendConfig, BackendKind, CompletionClient};
use p2t_core::error::{Error, Result};
use p2t_core::experiment::{
    cache_tool, render_human_table, CacheCommand, Experiment, ExperimentSpec,
};

#[derive(Parser)]
#[command(
    name = "p2t",
    version,
    about = "Prompt-based tabular transfer-learning experiment runner",
    long_about = "Runs in-context-learning and pseudo-demonstration prompting experiments \
                  over tabular datasets, with k-nearest-neighbor and logistic-regression \
                  baselines, seeded splits, and a content-addressed completion cache. \
                  Live backends read the API key from the P2T_API_KEY environment variable."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a spec file describes and print the report table.
    Run(RunArgs),
    /// Write every prompt a run would send to files; never touches the network.
    DumpPrompts(DumpArgs),
    /// Inspect or rewrite a completion cache file.
    Cache(CacheArgs),
}

/// Backend fields that may be overridden from the command line; everything
/// left unset keeps the spec file's value.
#[derive(Args)]
struct BackendOverrides {
    /// Backend kind: "http" (live chat completions) or "replay" (cache only).
    #[arg(long, value_parser = ["http", "replay"])]
    backend: Option<String>,
    /// Model name sent with each request (and part of the cache key).
    #[arg(long)]
    model: Option<String>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    base_url: Option<String>,
    /// Sampling temperature (part of the cache key).
    #[arg(long)]
    temperature: Option<f64>,
    /// JSON-lines completion cache file to read and append to.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec file (JSON); dataset paths resolve relative to it.
    spec: PathBuf,
    /// Maximum concurrent in-flight completions.
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    /// Abort before any completion that would push the estimated prompt-token
    /// total past this cap.
    #[arg(long)]
    budget: Option<u64>,
    /// Write the JSON report here (overrides the spec's output path).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    overrides: BackendOverrides,
}

#[derive(Args)]
struct DumpArgs {
    /// Experiment spec file (JSON).
    spec: PathBuf,
    /// Directory for the prompt files (created if absent).
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: BackendOverrides,
}

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    command: CacheSubcommand,
}

#[derive(Subcommand)]
enum CacheSubcommand {
    /// Print the entry count and a token-volume estimate.
    Stats {
        /// JSON-lines cache file.
        cache: PathBuf,
    },
    /// Drop every entry recorded for a different model.
    Prune {
        /// JSON-lines cache file, rewritten in place.
        cache: PathBuf,
        /// Model name whose entries survive.
        #[arg(long)]
        keep_model: String,
    },
    /// Re-emit the cache deduplicated and key-sorted (replay format).
    Export {
        /// JSON-lines cache file to read.
        cache: PathBuf,
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Every Error variant's Display embeds its cause, so one line
            // carries the whole story.
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ReplayMiss { .. } | Error::BackendUnavailable { .. } => 2,
        Error::Config(_)
        | Error::SchemaMismatch(_)
        | Error::Json { .. }
        | Error::Io { .. }
        | Error::BudgetExceeded { .. } => 3,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::DumpPrompts(args) => dump_prompts(args),
        Command::Cache(args) => cache(args.command),
    }
}

fn apply_overrides(cfg: &mut BackendConfig, overrides: &BackendOverrides) {
    if let Some(kind) = &overrides.backend {
        // clap restricts the value to "http" or "replay".
        cfg.backend_kind =
            if kind == "http" { BackendKind::HttpChat } else { BackendKind::Replay };
    }
    if let Some(model) = &overrides.model {
        cfg.model_name = model.clone();
    }
    if let Some(url) = &overrides.base_url {
        cfg.base_url = url.clone();
    }
    if let Some(temperature) = overrides.temperature {
        cfg.temperature = temperature;
    }
    if let Some(path) = &overrides.cache {
        cfg.cache_path = Some(path.clone());
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    apply_overrides(&mut spec.backend, &args.overrides);
    let output = args.output.clone().or_else(|| spec.output.clone());
    let experiment = Experiment::load(spec)?;
    let client =
        CompletionClient::new(experiment.spec.backend.clone())?.with_budget(args.budget);
    let report = experiment.run(&client, args.parallel.max(1))?;
    print!("{}", render_human_table(&report));
    if let Some(path) = output {
        let json = report.to_json()?;
        std::fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e))?;
        log::info!("report written to {}", path.display());
    }
    Ok(())
}

fn dump_prompts(args: DumpArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    apply_overrides(&mut spec.backend, &args.overrides);
    // Prompt dumps never touch the network: a live backend configuration
    // downgrades to replay over the same cache, so any completion the
    // prompts depend on (feature selection) must already be recorded.
    if spec.backend.backend_kind == BackendKind::HttpChat {
        spec.backend.backend_kind = BackendKind::Replay;
    }
    let experiment = Experiment::load(spec)?;
    let client = CompletionClient::new(experiment.spec.backend.clone())?;
    let written = experiment.dump_prompts(&client, &args.out_dir)?;
    println!("{} prompt file(s) written to {}", written.len(), args.out_dir.display());
    Ok(())
}

fn cache(sub: CacheSubcommand) -> Result<()> {
    let (path, command) = match sub {
        CacheSubcommand::Stats { cache } => (cache, CacheCommand::Stats),
        CacheSubcommand::Prune { cache, keep_model } => {
            (cache, CacheCommand::Prune { keep_model })
        }
        CacheSubcommand::Export { cache, out } => (cache, CacheCommand::Export { out }),
    };
    println!("{}", cache_tool(&path, command)?);
    Ok(())
}
