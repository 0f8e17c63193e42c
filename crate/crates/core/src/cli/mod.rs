//! The `opre` command line: train, eval, tournament, probe and replay.
//!
//! Every flag can also be set through an environment variable with the
//! `OPRE_` prefix (`OPRE_SEED`, `OPRE_OUT`, `OPRE_THREADS`, `OPRE_CONFIG`,
//! `OPRE_VARIANT`, `OPRE_EPISODES`, `OPRE_OPPONENTS`, `OPRE_RUN_ID`).
//! Exit codes: 0 success, 2 configuration error, 3 missing artifact,
//! 4 runtime failure.

mod commands;
mod manifest;

pub use commands::{cmd_eval, cmd_probe, cmd_replay, cmd_tournament, cmd_train, EvalArgs, ProbeArgs, TournamentArgs, TrainArgs};
pub use manifest::RunManifest;

use crate::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "opre", version, about = "Train and evaluate option-based agents on spatial rock-paper-scissors games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Root seed.
    #[arg(long, global = true, env = "OPRE_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "OPRE_OUT", default_value = "runs")]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "OPRE_THREADS")]
    pub threads: Option<usize>,
    /// Training configuration (TOML). Evaluation commands read bot settings from it.
    #[arg(long, global = true, env = "OPRE_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a population (or the hold-out population) from a config file.
    Train {
        /// Override the config's agent variant.
        #[arg(long, env = "OPRE_VARIANT")]
        variant: Option<String>,
        /// Train the 14-agent shaped hold-out population instead.
        #[arg(long)]
        holdout: bool,
        #[arg(long, env = "OPRE_RUN_ID")]
        run_id: Option<String>,
    },
    /// Evaluate a checkpoint against scripted bots or a directory of agents.
    Eval {
        /// Checkpoint file or agent directory.
        checkpoint: PathBuf,
        /// `scripted` or a run/agent directory of opponents.
        #[arg(long, env = "OPRE_OPPONENTS", default_value = "scripted")]
        opponents: String,
        #[arg(long, env = "OPRE_EPISODES", default_value_t = 100)]
        episodes: u64,
        /// Take the most likely action instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Also write full replays of the first N episodes.
        #[arg(long, default_value_t = 0)]
        save_replays: u64,
    },
    /// Round-robin tournament, payoff matrix and meta-game Nash equilibrium.
    Tournament {
        /// Checkpoints, agent or run directories, `scripted` or `random`.
        #[arg(required = true)]
        policies: Vec<String>,
        #[arg(long, env = "OPRE_EPISODES", default_value_t = 100)]
        episodes: u64,
        /// Game preset when no checkpoint fixes it.
        #[arg(long)]
        preset: Option<String>,
        /// Exploitability target of the equilibrium.
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Per-option behaviour statistics against each scripted bot.
    Probe {
        checkpoint: PathBuf,
        #[arg(long, env = "OPRE_EPISODES", default_value_t = 100)]
        episodes: u64,
    },
    /// Print a recorded episode step by step.
    Replay {
        file: PathBuf,
        /// Preset name or file; defaults to the one named in the replay.
        #[arg(long)]
        preset: Option<String>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Missing(_) => 3,
        _ => 4,
    }
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> crate::Result<()> {
    let threads = cli.threads.unwrap_or(1).max(1);
    match cli.command {
        Command::Train { variant, holdout, run_id } => {
            let config = cli.config.ok_or_else(|| Error::Config("train needs --config".into()))?;
            let variant = variant.map(|v| v.parse()).transpose()?;
            let args = TrainArgs { config, seed: cli.seed, variant, threads: cli.threads, out: cli.out, run_id, holdout };
            cmd_train(&args).map(|_| ())
        }
        Command::Eval { checkpoint, opponents, episodes, greedy, save_replays } => {
            let args = EvalArgs {
                checkpoint,
                opponents,
                episodes,
                greedy,
                save_replays,
                seed: cli.seed.unwrap_or(0),
                threads,
                out: cli.out,
                config: cli.config,
            };
            cmd_eval(&args).map(|_| ())
        }
        Command::Tournament { policies, episodes, preset, epsilon } => {
            let args = TournamentArgs {
                policies,
                episodes,
                preset,
                epsilon,
                seed: cli.seed.unwrap_or(0),
                threads,
                out: cli.out,
                config: cli.config,
            };
            cmd_tournament(&args).map(|_| ())
        }
        Command::Probe { checkpoint, episodes } => {
            let args =
                ProbeArgs { checkpoint, episodes, seed: cli.seed.unwrap_or(0), threads, out: cli.out, config: cli.config };
            cmd_probe(&args).map(|_| ())
        }
        Command::Replay { file, preset } => {
            let stdout = std::io::stdout();
            cmd_replay(&file, preset.as_deref(), &mut stdout.lock()).map(|_| ())
        }
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
