//! The `report` command. Each run directory is a `seed_<k>` folder written
//! by `run`; its manifest is looked up next to it or one level up.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use regband::analysis::{cross_eval, fanova_first_order, read_history_csv, AnalysisError, ParetoReport};
use regband::configspace::SearchSpace;
use regband::harness::SyntheticProblem;
use regband::priorband::{final_incumbent, RunHistory};

use crate::manifest::{ProblemSpec, RunManifest, RESOLVED_NAME};
use crate::{stdout_err, write_file, CliError};

#[derive(Debug, Clone, Subcommand)]
pub enum ReportCommand {
    /// Write importance.json for a run.
    Importance {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 32)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate every run's incumbent on every run's problem.
    Crosseval {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite pareto.json from history.csv.
    Pareto {
        #[arg(long)]
        run: PathBuf,
    },
}

/// A finished run loaded back from disk.
pub struct RunDir {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub space: SearchSpace,
    pub history: RunHistory,
    pub seed: u64,
}

impl RunDir {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        if !dir.is_dir() {
            return Err(CliError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found")));
        }
        let manifest_path = [dir.join(RESOLVED_NAME), dir.join("..").join(RESOLVED_NAME)]
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| {
                CliError::io(
                    &dir.join(RESOLVED_NAME),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no resolved manifest next to the run"),
                )
            })?;
        let manifest = RunManifest::load(&manifest_path)?;
        let space = SearchSpace::load(&manifest.space)?;
        let history_path = dir.join("history.csv");
        let file = std::fs::File::open(&history_path).map_err(|e| CliError::io(&history_path, e))?;
        let (history, seed) = read_history_csv(&space, file).map_err(|e| match e {
            AnalysisError::MalformedHistory { line, reason } => {
                CliError::Validation(format!("{}: malformed row {line}: {reason}", history_path.display()))
            }
            other => other.into(),
        })?;
        Ok(Self { dir: dir.to_path_buf(), manifest, space, history, seed })
    }
}

pub fn cmd_report(command: &ReportCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        ReportCommand::Importance { run, trees, seed } => {
            let r = RunDir::open(run)?;
            let report = fanova_first_order(&r.space, &r.history, *trees, *seed)?;
            let path = r.dir.join("importance.json");
            write_file(&path, report.to_json().as_bytes())?;
            writeln!(out, "{}", path.display()).map_err(stdout_err)?;
        }
        ReportCommand::Pareto { run } => {
            let r = RunDir::open(run)?;
            let report = ParetoReport::from_history(&r.history, r.manifest.max_budget);
            let path = r.dir.join("pareto.json");
            write_file(&path, report.to_json().as_bytes())?;
            writeln!(out, "{}", path.display()).map_err(stdout_err)?;
        }
        ReportCommand::Crosseval { runs, out: target } => {
            let mut problems = Vec::with_capacity(runs.len());
            let mut incumbents = Vec::with_capacity(runs.len());
            for dir in runs {
                let r = RunDir::open(dir)?;
                let name = dir.display().to_string();
                let ProblemSpec::Synthetic { spec } = &r.manifest.problem else {
                    return Err(CliError::Validation(format!("run `{name}` did not use a synthetic problem")));
                };
                let b_max = r.manifest.max_budget;
                let inc = final_incumbent(&r.history, b_max)?;
                incumbents.push((name.clone(), inc.configuration.clone()));
                problems.push((name, SyntheticProblem::new(r.space, b_max, spec.clone())?));
            }
            let matrix = cross_eval(&problems, &incumbents)?;
            write_file(target, matrix.to_csv().as_bytes())?;
            writeln!(out, "{}", target.display()).map_err(stdout_err)?;
        }
    }
    Ok(())
}
