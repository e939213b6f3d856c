mod args;
mod commands;
mod config;
mod files;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::RunConfig;

/// Why a run stopped. The exit code is part of the scripting contract:
/// 1 for bad or unusable data, 2 for bad invocations.
#[derive(Debug)]
pub enum Failure {
    Data(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Data(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl From<starjitter::Error> for Failure {
    fn from(e: starjitter::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("starjitter: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let ctx = commands::Context::new(cli, &cfg)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Estimate(a) => commands::estimate(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::DecodeTelemetry(a) => commands::decode_telemetry(&ctx, a),
        Command::Align(a) => commands::align(&ctx, a),
    }
}
