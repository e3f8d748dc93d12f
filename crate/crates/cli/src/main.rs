mod commands;
mod config;
mod error;
mod output;

use clap::Parser;

use crate::config::{Cli, RunConfig};
use crate::error::CliError;

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RIESZ_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "RIESZ_LAB_THREADS: need a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("RIESZ_LAB_THREADS: {e}")))
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    init_threads()?;
    let (command, flags) = cli.command.split();
    let cfg = RunConfig::merge(command, &flags)?;
    let out = commands::dispatch(&cfg)?;
    output::emit(&cfg, &out)?;
    let failed = out.failures();
    if let Some(first) = failed.first() {
        return Err(CliError::Violation(format!(
            "{}: {}",
            first.name, first.detail
        )));
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("riesz-lab: {e}");
        std::process::exit(e.exit_code());
    }
}
