//! Command-line front end for `critic_gate`: runs suites, generates
//! fixtures and critic datasets, and evaluates or inspects trajectory logs.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use critic_gate::EnvKind;

use crate::commands::{LogSource, Outcome};
use crate::config::{CriticKind, Overrides};

#[derive(Debug, Parser)]
#[command(name = "critic-gate", version, about = "Actor-critic supervision for tool-using agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task of a suite K times and write logs and a summary
    Run(Overrides),
    /// Build a critic fine-tuning dataset from supervised runs on hard tasks
    Datagen {
        #[command(flatten)]
        flags: Overrides,
        /// Actor-only failures (out of K) that make a task hard [default: 2]
        #[arg(long)]
        psi: Option<u32>,
        /// Keep only tasks whose supervised runs all succeed
        #[arg(long)]
        strict: bool,
    },
    /// Generate a seeded fixture suite
    GenSuite {
        /// retail | travel
        #[arg(long = "env")]
        kind: EnvKind,
        /// Number of tasks
        #[arg(short, long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Travel only: preferences per aspect (2, 3 or 4)
        #[arg(long)]
        difficulty: Option<usize>,
        /// Write here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Recompute metrics from logs; two logs give an uplift report
    Eval {
        /// One or two trajectory logs (baseline first)
        #[arg(required = true, num_args = 1..=2)]
        logs: Vec<PathBuf>,
        /// Environment, if run.json is not next to the logs
        #[arg(long = "env")]
        kind: Option<EnvKind>,
        /// Method labels, one per log
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Print transcripts and critic activity from a log
    Inspect {
        log: PathBuf,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Run(flags) => commands::cmd_run(&config::resolve(&flags, CriticKind::None)?),
        Command::Datagen { flags, psi, strict } => {
            let cfg = config::resolve(&flags, CriticKind::Oracle)?;
            commands::cmd_datagen(&cfg, config::resolve_datagen(&flags, psi, strict)?)
        }
        Command::GenSuite { kind, n, seed, difficulty, output } => {
            commands::cmd_gen_suite(kind, n, seed, difficulty, output.as_deref())
        }
        Command::Eval { logs, kind, method, json } => {
            if !method.is_empty() && method.len() != logs.len() {
                anyhow::bail!("give one --method label per log");
            }
            let sources: Vec<LogSource> = logs
                .into_iter()
                .enumerate()
                .map(|(i, path)| LogSource { path, environment: kind, method: method.get(i).cloned() })
                .collect();
            commands::cmd_eval(&sources, json)
        }
        Command::Inspect { log, task, seed } => commands::cmd_inspect(&log, task.as_deref(), seed),
    }
}
