use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pemo_cli::config::BaselineKind;
use pemo_cli::{commands, RunConfig, RunManifest};

/// Permutation-equivariant transformer modules for wireless policies:
/// datasets, training, evaluation, baselines and equivariance checks.
#[derive(Parser, Debug)]
#[command(name = "pemo", version)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config value by its dotted path, e.g. `train.epochs=50`.
    #[arg(short = 's', long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write train and test datasets for every configured task.
    Generate,
    /// Train the configured pool and score it on the test sets.
    Train,
    /// Evaluate a trained pool with a per-size breakdown.
    Eval {
        /// Train manifest to evaluate; defaults to the one in the output directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run a classical baseline on the test sets.
    Baseline {
        #[arg(long, value_parser = parse_kind)]
        kind: Option<BaselineKind>,
    },
    /// Check every module and composed model against its claimed property.
    VerifyPe,
    /// Print the effective configuration.
    Config,
}

fn parse_kind(s: &str) -> Result<BaselineKind, String> {
    match s {
        "wmmse" => Ok(BaselineKind::Wmmse),
        "zero_forcing" | "zf" => Ok(BaselineKind::ZeroForcing),
        "matched_filter" | "mf" => Ok(BaselineKind::MatchedFilter),
        _ => Err(format!("unknown baseline `{s}` (wmmse, zero_forcing, matched_filter)")),
    }
}

fn load_config(cli: &Cli) -> pemo_cli::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    cfg.apply_env()?;
    Ok(cfg)
}

fn summarize(m: &RunManifest) {
    println!("{} -> {}", m.command, RunManifest::path_in(&m.config.output_dir, &m.command).display());
    if let Some(p) = m.param_count {
        println!("  parameters  {p}");
    }
    for (k, v) in &m.metrics {
        println!("  {k:<40} {v}");
    }
}

fn run(cli: Cli) -> pemo_cli::Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Generate => summarize(&commands::generate(&cfg)?),
        Command::Train => summarize(&commands::train(&cfg)?),
        Command::Eval { manifest } => summarize(&commands::eval(&cfg, manifest.as_deref())?),
        Command::Baseline { kind } => {
            if let Some(k) = kind {
                cfg.baseline.kind = k;
            }
            summarize(&commands::baseline(&cfg)?)
        }
        Command::VerifyPe => summarize(&commands::verify_pe(&cfg)?.0),
        Command::Config => print!("{}", cfg.to_toml_string()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
