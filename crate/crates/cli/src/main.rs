//! `cseal` experiment harness.

mod commands;
mod config;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, UsageError};

#[derive(Debug, Parser)]
#[command(name = "cseal", version, about = "Learning-path recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// kss or kes.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an offline dataset with the rule-based simulator.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Train the knowledge tracing model.
    TrainDkt {
        #[command(flatten)]
        common: Common,
    },
    /// Train the actor-critic recommender.
    TrainAgent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a method over seeded sessions.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate at several learning path lengths.
    SweepLength {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated path lengths.
        #[arg(long)]
        lengths: Option<String>,
    },
    /// Print recommended paths with their candidate sets.
    ShowPath {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
    },
}

fn build_config(common: &Common, extra: &[(&str, Option<String>)]) -> anyhow::Result<Config> {
    let mut cfg = Config::defaults();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    cfg.apply_overrides(&common.overrides)?;
    let flags = [
        ("seed", common.seed.map(|s| s.to_string())),
        ("out", common.out.as_ref().map(|p| p.display().to_string())),
        ("env", common.env.clone()),
        ("method", common.method.clone()),
        ("jobs", common.jobs.map(|j| j.to_string())),
    ];
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if let Some(jobs) = cfg.get_opt::<usize>("jobs")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| UsageError(format!("cannot size worker pool: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { common, sessions } => {
            let cfg = build_config(&common, &[("sessions", sessions.map(|s| s.to_string()))])?;
            commands::gen_data(&cfg)
        }
        Command::TrainDkt { common } => commands::train_dkt(&build_config(&common, &[])?),
        Command::TrainAgent { common, epochs } => {
            let cfg = build_config(&common, &[("epochs", epochs.map(|e| e.to_string()))])?;
            commands::train_agent(&cfg)
        }
        Command::Eval { common, episodes } => {
            let cfg = build_config(&common, &[("episodes", episodes.map(|e| e.to_string()))])?;
            commands::eval(&cfg)
        }
        Command::SweepLength { common, episodes, lengths } => {
            let cfg = build_config(
                &common,
                &[("episodes", episodes.map(|e| e.to_string())), ("lengths", lengths)],
            )?;
            commands::sweep_length(&cfg)
        }
        Command::ShowPath { common, episodes } => {
            let cfg = build_config(&common, &[("episodes", episodes.map(|e| e.to_string()))])?;
            commands::show_path(&cfg)
        }
    }
}

/// 1 usage, 2 data, 3 numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<UsageError>() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cseal::Error>() {
            return match e {
                cseal::Error::Numeric(_) => 3,
                cseal::Error::InvalidArgument(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
