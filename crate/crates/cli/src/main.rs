//! `specopt`: batch front end for the solvers in `specopt-core`.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 bad
//! configuration or input, 3 infeasible problem, 4 solver did not converge.
//! Failures print one JSON line on stderr.

mod config;
mod run;
mod svg;

use std::process::ExitCode;

use clap::Parser;
use specopt_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] CoreError),
    #[error(transparent)]
    Render(#[from] svg::RenderError),
}

impl CliError {
    fn kind(&self) -> (&'static str, u8) {
        match self {
            CliError::Config(_) => ("bad_config", 2),
            CliError::Infeasible(_) | CliError::Render(_) => ("infeasible", 3),
            CliError::Io(_) => ("io", 1),
            CliError::Solver(e) => match e {
                CoreError::InfeasibleBudget { .. }
                | CoreError::NoDirichletVertex
                | CoreError::DegenerateMax
                | CoreError::GridTooCoarse { .. } => ("infeasible", 3),
                CoreError::NonConvergence { .. } | CoreError::SingularSystem { .. } => ("nonconvergence", 4),
                _ => ("bad_config", 2),
            },
        }
    }
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match config::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail("bad_config", 2, first);
        }
    };
    match run::run(&cli.command) {
        Ok(m) => {
            println!("{}: wrote {}", m.command, m.artifacts.join(", "));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = e.kind();
            fail(kind, code, &e.to_string())
        }
    }
}
