//! Command-line front end: `run` drives optimizations from a manifest,
//! `grammar` inspects architecture grammars and `report` post-processes
//! finished runs.
//!
//! Exit codes are stable: 0 success, 2 validation error, 3 evaluator
//! failure, 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use regband::analysis::AnalysisError;
use regband::configspace::SpaceError;
use regband::grammar::GrammarError;
use regband::harness::HarnessError;
use regband::priorband::RunError;
use thiserror::Error;

pub mod grammar;
pub mod manifest;
pub mod report;
pub mod run;

pub use manifest::{parse_seeds, ProblemKind, ProblemSpec, RunManifest, SeedList};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_EVALUATOR: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Grammar(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Space(e) => space_code(e),
            CliError::Harness(e) => harness_code(e),
            CliError::Run(RunError::Evaluation { source, .. }) => match source {
                HarnessError::Io { .. } => EXIT_IO,
                _ => EXIT_EVALUATOR,
            },
            CliError::Run(RunError::Space(e)) => space_code(e),
            CliError::Run(_) => EXIT_VALIDATION,
            CliError::Analysis(e) => match e {
                AnalysisError::Io { .. } => EXIT_IO,
                AnalysisError::Csv(c) if c.is_io_error() => EXIT_IO,
                AnalysisError::Space(s) => space_code(s),
                AnalysisError::Harness(h) => harness_code(h),
                _ => EXIT_VALIDATION,
            },
        }
    }
}

fn space_code(e: &SpaceError) -> i32 {
    match e {
        SpaceError::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn harness_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Io { .. } => EXIT_IO,
        HarnessError::Spawn { .. }
        | HarnessError::Timeout(_)
        | HarnessError::ProtocolError(_)
        | HarnessError::EvaluatorReportedFailure(_) => EXIT_EVALUATOR,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "regband", version, about = "Multi-fidelity hyperparameter and architecture search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the optimizer for one or more seeds.
    Run(run::RunArgs),
    /// Count, enumerate or sample architecture derivations.
    Grammar {
        #[command(subcommand)]
        command: grammar::GrammarCommand,
    },
    /// Recompute reports from finished runs.
    Report {
        #[command(subcommand)]
        command: report::ReportCommand,
    },
}

/// Executes a parsed command line, writing user-facing output to `out`.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&args.into_manifest()?, out).map(|_| ()),
        Command::Grammar { command } => grammar::cmd_grammar(&command, out),
        Command::Report { command } => report::cmd_report(&command, out),
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io(&PathBuf::from("<stdout>"), e)
}
