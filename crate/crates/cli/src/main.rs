//! `epic`: batch front end for provisioning, simulation, attack, billing and
//! analysis runs.

mod commands;
mod error;
mod output;
mod state;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "epic", version, about = "Privacy-preserving smart-meter aggregation experiments")]
pub struct Cli {
    /// Flat TOML parameter file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit a single JSON document instead of CSV.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Etoe,
    Hbyh,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Provision a system and persist it to the state directory.
    Setup(SetupArgs),
    /// Run aggregation rounds through the network simulator.
    Simulate(SimulateArgs),
    /// Inject an attack and report detection and identification.
    Attack(AttackArgs),
    /// Run whole billing periods and check per-meter totals.
    Billing(BillingArgs),
    /// Collusion probability or minimum proxy count.
    Collusion(CollusionArgs),
    /// Computation and communication cost per entity.
    Overhead(OverheadArgs),
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    /// Grid size: the gateway plus n-1 meters.
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub rounds: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// hash, reading, both, replay or tamper.
    #[arg(long = "attack-type", visible_alias = "type")]
    pub attack_type: String,
    /// `auto` or a node such as `sm5` or `gw`.
    #[arg(long, default_value = "auto")]
    pub attacker: String,
    /// Round from which the attack is active; earlier rounds are honest.
    #[arg(long, default_value_t = 1)]
    pub activation: u64,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct BillingArgs {
    /// Rounds to run; defaults to one billing period.
    #[arg(long)]
    pub rounds: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CollusionArgs {
    #[arg(long = "n")]
    pub n: u64,
    #[arg(long = "m")]
    pub m: u64,
    /// Omit to compute the smallest sufficient proxy count instead.
    #[arg(long)]
    pub lambda: Option<u64>,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Candidate pool: n, n+1 or n+2.
    #[arg(long, default_value = "n+1")]
    pub pool: String,
    /// Also estimate the probability by sampling.
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OverheadArgs {
    /// sm, gateway, utility or all.
    #[arg(long, default_value = "all")]
    pub entity: String,
    #[arg(long = "n", default_value_t = 36)]
    pub n: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli, std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("epic: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

