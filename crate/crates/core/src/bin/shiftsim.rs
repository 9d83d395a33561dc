use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftsim::cli::{cmd_compare, cmd_simulate};
use shiftsim::decision::Policy;

#[derive(Parser)]
#[command(name = "shiftsim", about = "Simulate service shifting under resource shortage")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario under one policy.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "payoff")]
        policy: Policy,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        duration_override: Option<f64>,
    },
    /// Run one scenario under several policies with the same seed.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<Policy>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        duration_override: Option<f64>,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match args.cmd {
        Cmd::Simulate { scenario, seed, policy, out, duration_override } => {
            cmd_simulate(&scenario, seed, policy, &out, duration_override)
        }
        Cmd::Compare { scenario, seed, policies, out, duration_override } => {
            cmd_compare(&scenario, seed, &policies, &out, duration_override)
        }
    };
    ExitCode::from(code as u8)
}
