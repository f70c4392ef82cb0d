//! `qempc`: synthesize explicit MPC laws and evaluate them under plaintext,
//! key-stream, and Paillier backends.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qempc::protocol::Backend;

use commands::Context;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Config(String),
    /// Failure while running: exit code 1.
    Runtime(String),
}

#[derive(Parser)]
#[command(name = "qempc", version, about = "Explicit MPC synthesis and encrypted closed-loop evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed_keys: Option<u64>,
    #[arg(long, global = true)]
    seed_quant: Option<u64>,
    #[arg(long, global = true)]
    seed_attack: Option<u64>,
    /// plaintext, qe, qe_quantized, or paillier.
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accuracy target; derives δ, w, p.
    #[arg(long, global = true)]
    epsilon_q: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the piecewise-affine controller and write `controller.json`.
    Synthesize,
    /// Simulate one closed loop and write `trajectory.csv`.
    Run,
    /// Sweep parameters over backends; write `metrics.csv` and `timing.csv`.
    Bench {
        /// `key=v1,v2;key2=v3`, keys among w_b, w, p, rho, gamma, delta, L, epsilon_q.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Least-squares eavesdropping attack; write `attack.csv`.
    Attack,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(v) = cli.seed_keys {
        cfg.seeds.keys = v;
    }
    if let Some(v) = cli.seed_quant {
        cfg.seeds.quant = v;
    }
    if let Some(v) = cli.seed_attack {
        cfg.seeds.attack = v;
    }
    if let Some(v) = cli.epsilon_q {
        cfg.params.epsilon_q = Some(v);
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok(Context { cfg, out, backend: cli.backend })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = context(&cli).and_then(|ctx| match &cli.command {
        Command::Synthesize => commands::synthesize_cmd(&ctx),
        Command::Run => commands::run_cmd(&ctx),
        Command::Bench { sweep } => commands::bench_cmd(&ctx, sweep.as_deref()),
        Command::Attack => commands::attack_cmd(&ctx),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
