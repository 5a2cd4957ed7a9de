//! `lacelab`: batch front end for the lace-expansion toolkit.
//!
//! Exit status is 0 on success, 1 when a hard invariant (an exact identity)
//! fails and 2 on usage errors or inputs the model cannot run with.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::Value;

use config::Cli;
use output::{render, CliError};

fn config_echo(cli: &Cli) -> Value {
    let mut value = serde_json::to_value(&cli.command).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut value {
        map.insert("threads".into(), serde_json::json!(cli.threads));
    }
    value
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let artifact = commands::dispatch(&cli.command)?;
    let out = cli.command.output();
    let bytes = render(&artifact, &config_echo(cli), out.format)?;
    match &out.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    if let Some(msg) = &artifact.message {
        eprintln!("{msg}");
    }
    match artifact.invariant_failure {
        Some(msg) => Err(CliError::Invariant(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
