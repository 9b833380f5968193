//! The `run` command.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use regband::analysis::{export_reports, fanova_first_order};
use regband::configspace::SearchSpace;
use regband::harness::{ExternalProblem, Problem, ReplayProblem, SyntheticProblem, SyntheticSpec};
use regband::priorband::{run, Mode, RunOptions, RunResult};
use regband::scheduler::{budget_ladder, ChargeMode, Policy};

use crate::manifest::{ProblemKind, ProblemSpec, RunManifest, SeedList, RESOLVED_NAME};
use crate::{stdout_err, write_file, CliError};

/// Trees used for the optional importance report.
const IMPORTANCE_TREES: usize = 32;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON manifest; flags given here override its values.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Search space definition.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<ProblemKind>,
    /// Synthetic problem parameters (JSON).
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Replay table (CSV).
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Evaluator command line, split on whitespace.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub eta: Option<u64>,
    #[arg(long)]
    pub min_budget: Option<u64>,
    #[arg(long)]
    pub max_budget: Option<u64>,
    #[arg(long)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub charge: Option<ChargeMode>,
    /// A seed, a list `1,2,5` or a half-open range `0..20`.
    #[arg(long, alias = "seeds")]
    pub seed: Option<SeedList>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_brackets: Option<usize>,
    /// Output root; defaults to $REGBAND_OUT, then `results`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write importance.json per seed.
    #[arg(long)]
    pub importance: bool,
}

impl RunArgs {
    pub fn into_manifest(self) -> Result<RunManifest, CliError> {
        let mut m = match &self.manifest {
            Some(path) => RunManifest::load(path)?,
            None => RunManifest::default(),
        };
        if let Some(space) = self.space {
            m.space = space;
        }
        let inferred = if self.synthetic.is_some() {
            Some(ProblemKind::Synthetic)
        } else if self.replay.is_some() {
            Some(ProblemKind::Replay)
        } else if self.evaluator.is_some() {
            Some(ProblemKind::External)
        } else {
            None
        };
        let kind = self.problem.or(inferred).unwrap_or(m.problem.kind());
        m.problem = match kind {
            ProblemKind::Synthetic => {
                let spec = match &self.synthetic {
                    Some(path) => load_synthetic(path)?,
                    None => match m.problem {
                        ProblemSpec::Synthetic { spec } => spec,
                        _ => SyntheticSpec::default(),
                    },
                };
                ProblemSpec::Synthetic { spec }
            }
            ProblemKind::Replay => {
                let path = match (self.replay, &m.problem) {
                    (Some(p), _) => p,
                    (None, ProblemSpec::Replay { path }) => path.clone(),
                    _ => return Err(CliError::Validation("replay problem needs --replay FILE".into())),
                };
                ProblemSpec::Replay { path }
            }
            ProblemKind::External => {
                let (old_cmd, old_timeout) = match &m.problem {
                    ProblemSpec::External { command, timeout_secs } => (Some(command.clone()), Some(*timeout_secs)),
                    _ => (None, None),
                };
                let command = match self.evaluator {
                    Some(line) => line.split_whitespace().map(str::to_string).collect(),
                    None => old_cmd
                        .ok_or_else(|| CliError::Validation("external problem needs --evaluator CMD".into()))?,
                };
                let timeout_secs = self.timeout_secs.or(old_timeout).unwrap_or(3600.0);
                ProblemSpec::External { command, timeout_secs }
            }
        };
        if let Some(v) = self.mode {
            m.mode = v;
        }
        if let Some(v) = self.eta {
            m.eta = v;
        }
        if let Some(v) = self.min_budget {
            m.min_budget = v;
        }
        if let Some(v) = self.max_budget {
            m.max_budget = v;
        }
        if let Some(v) = self.policy {
            m.policy = v;
        }
        if let Some(v) = self.charge {
            m.charge = v;
        }
        if let Some(v) = self.seed {
            m.seeds = v.0;
        }
        if let Some(v) = self.workers {
            m.workers = v;
        }
        if self.max_brackets.is_some() {
            m.max_brackets = self.max_brackets;
        }
        if self.out.is_some() {
            m.out_dir = self.out;
        }
        m.importance |= self.importance;
        Ok(m)
    }
}

fn load_synthetic(path: &std::path::Path) -> Result<SyntheticSpec, CliError> {
    if !path.is_file() {
        return Err(CliError::Validation(format!("synthetic problem file `{}` does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("malformed synthetic problem `{}`: {e}", path.display())))
}

fn build_problem(m: &RunManifest, space: &SearchSpace) -> Result<Box<dyn Problem>, CliError> {
    Ok(match &m.problem {
        ProblemSpec::Synthetic { spec } => Box::new(SyntheticProblem::new(space.clone(), m.max_budget, spec.clone())?),
        ProblemSpec::Replay { path } => Box::new(ReplayProblem::load(path)?),
        ProblemSpec::External { command, timeout_secs } => {
            Box::new(ExternalProblem::new(command.clone(), Duration::from_secs_f64(*timeout_secs))?)
        }
    })
}

/// Runs every seed of the manifest, writing reports to
/// `<out>/seed_<k>/` and the resolved manifest to `<out>/`.
pub fn cmd_run(m: &RunManifest, out: &mut dyn Write) -> Result<Vec<RunResult>, CliError> {
    m.validate()?;
    let space = SearchSpace::load(&m.space)?;
    let ladder = budget_ladder(m.min_budget, m.max_budget, m.eta)
        .map_err(|e| CliError::Validation(format!("invalid budgets: {e}")))?;
    let problem = build_problem(m, &space)?;
    let root = m.output_root();
    let resolved = m.resolved(&root)?;
    write_file(&root.join(RESOLVED_NAME), resolved.to_json().as_bytes())?;

    let mut results = Vec::with_capacity(m.seeds.len());
    for &seed in &m.seeds {
        let options = RunOptions {
            mode: m.mode,
            policy: m.policy,
            charge: m.charge,
            seed,
            workers: m.workers,
            max_brackets: m.max_brackets,
        };
        log::info!("seed {seed}: starting");
        let result = run(&space, problem.as_ref(), &ladder, &options)?;
        let importance = if m.importance {
            Some(fanova_first_order(&space, &result.history, IMPORTANCE_TREES, seed)?)
        } else {
            None
        };
        let dir = root.join(format!("seed_{seed}"));
        export_reports(&result, &dir, importance.as_ref())?;
        let best = result.final_incumbent.as_ref().and_then(|t| t.cost);
        match best {
            Some(c) => writeln!(
                out,
                "seed {seed}: {} trials, incumbent primary {} runtime {}h -> {}",
                result.history.trials().len(),
                c.primary,
                c.runtime_hours,
                dir.display()
            ),
            None => writeln!(out, "seed {seed}: {} trials, no incumbent -> {}", result.history.trials().len(), dir.display()),
        }
        .map_err(stdout_err)?;
        results.push(result);
    }
    Ok(results)
}
