//! The optimizer loop. Brackets of successive halving are filled by an
//! ensemble sampler (uniform, prior, around the incumbent) whose weights
//! follow a geometric schedule and, once a full-budget result exists, the
//! relative likelihood of the best configurations under prior and
//! incumbent. `Regularized` mode promotes by Pareto rank and crowding
//! distance instead of error alone.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configspace::{Configuration, SamplingStrategy, SearchSpace, SpaceError};
use crate::harness::{EvalRequest, HarnessError, Objectives, Problem};
use crate::moo::{self, CostVector, MooError};
use crate::scheduler::{
    bracket_plan, BudgetLadder, ChargeMode, Policy, SamplingTag, Trial, TrialStatus,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no trial has been evaluated at the maximum budget")]
    NoMaxBudgetTrial,
    #[error("history is empty")]
    EmptyHistory,
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Moo(#[from] MooError),
    #[error("evaluation of config {config_id} at budget {budget} failed: {source}")]
    Evaluation { config_id: u64, budget: u64, source: HarnessError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Single objective: promotion and incumbents by primary cost.
    PriorBand,
    /// Pareto promotion, area-based sampling incumbent.
    #[default]
    Regularized,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "priorband" => Ok(Mode::PriorBand),
            "regularized" => Ok(Mode::Regularized),
            other => Err(format!("unknown mode `{other}` (expected priorband or regularized)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerWeights {
    pub p_random: f64,
    pub p_prior: f64,
    pub p_incumbent: f64,
}

impl SamplerWeights {
    /// Weights before any full-budget result: `p_U = 1 / (1 + eta^r)`, the
    /// rest on the prior.
    pub fn scheduled(r: usize, eta: u64) -> Self {
        let p_random = 1.0 / (1.0 + (eta as f64).powi(r as i32));
        Self { p_random, p_prior: 1.0 - p_random, p_incumbent: 0.0 }
    }

    /// Splits the non-random mass according to `(prior, incumbent)` shares.
    pub fn with_shares(r: usize, eta: u64, shares: (f64, f64)) -> Self {
        let base = Self::scheduled(r, eta);
        let rest = 1.0 - base.p_random;
        let p_incumbent = rest * shares.1;
        Self { p_random: base.p_random, p_prior: rest - p_incumbent, p_incumbent }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SamplingTag {
        let u: f64 = rng.random();
        if u < self.p_random {
            SamplingTag::Random
        } else if u < self.p_random + self.p_prior {
            SamplingTag::Prior
        } else {
            SamplingTag::Incumbent
        }
    }
}

/// Append-only record of every evaluation of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunHistory {
    trials: Vec<Trial>,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_trials(trials: Vec<Trial>) -> Self {
        Self { trials }
    }

    pub fn push(&mut self, trial: Trial) {
        self.trials.push(trial);
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn has_max_budget_trial(&self, b_max: u64) -> bool {
        self.trials.iter().any(|t| t.budget == b_max && t.ok_cost().is_some())
    }

    /// Each configuration's successful trial at its highest budget, in
    /// config_id order.
    pub fn latest(&self) -> Vec<&Trial> {
        let mut best: BTreeMap<u64, &Trial> = BTreeMap::new();
        for t in self.trials.iter().filter(|t| t.ok_cost().is_some()) {
            let e = best.entry(t.config_id).or_insert(t);
            if t.budget > e.budget {
                *e = t;
            }
        }
        best.into_values().collect()
    }

    /// Pareto front of [`RunHistory::latest`], in config_id order.
    pub fn pareto_front(&self) -> Vec<&Trial> {
        let latest = self.latest();
        if latest.is_empty() {
            return Vec::new();
        }
        let costs: Vec<CostVector> = latest.iter().map(|t| t.cost.expect("ok trial")).collect();
        let front = moo::pareto_front(&costs).expect("finite costs");
        front.into_iter().map(|i| latest[i]).collect()
    }
}

fn best_by_primary<'a>(trials: &[&'a Trial]) -> Option<&'a Trial> {
    let costs: Vec<CostVector> = trials.iter().map(|t| t.cost.expect("ok trial")).collect();
    moo::argmin_primary(&costs).map(|i| trials[i])
}

/// Pareto-area choice among the latest costs of every configuration.
pub fn incumbent_for_sampling(history: &RunHistory) -> Result<&Trial, RunError> {
    let front = history.pareto_front();
    if front.is_empty() {
        return Err(RunError::EmptyHistory);
    }
    let costs: Vec<CostVector> = front.iter().map(|t| t.cost.expect("ok trial")).collect();
    Ok(front[moo::area_incumbent(&costs)?])
}

/// Lowest primary cost among full-budget trials; ties go to the faster
/// run, then to the earlier configuration.
pub fn final_incumbent(history: &RunHistory, b_max: u64) -> Result<&Trial, RunError> {
    let mut at_max: Vec<&Trial> = history
        .trials()
        .iter()
        .filter(|t| t.budget == b_max && t.ok_cost().is_some())
        .collect();
    at_max.sort_by_key(|t| t.config_id);
    best_by_primary(&at_max).ok_or(RunError::NoMaxBudgetTrial)
}

fn mode_incumbent(history: &RunHistory, mode: Mode) -> Result<&Trial, RunError> {
    match mode {
        Mode::Regularized => incumbent_for_sampling(history),
        Mode::PriorBand => best_by_primary(&history.latest()).ok_or(RunError::EmptyHistory),
    }
}

/// Shares `(prior, incumbent)` proportional to the summed prior density of
/// the top `max(1, ceil(n / eta))` configurations under each center.
pub fn dynamic_weighting(
    space: &SearchSpace,
    history: &RunHistory,
    prior_center: &Configuration,
    incumbent: &Configuration,
    eta: u64,
    b_max: u64,
) -> Result<(f64, f64), RunError> {
    if !history.has_max_budget_trial(b_max) {
        return Err(RunError::NoMaxBudgetTrial);
    }
    let mut ranked = history.latest();
    ranked.sort_by(|a, b| {
        let (ca, cb) = (a.cost.expect("ok"), b.cost.expect("ok"));
        ca.primary
            .total_cmp(&cb.primary)
            .then(ca.runtime_hours.total_cmp(&cb.runtime_hours))
            .then(a.config_id.cmp(&b.config_id))
    });
    let n_top = ranked.len().div_ceil(eta as usize).max(1);
    let (mut score_prior, mut score_inc) = (0.0, 0.0);
    for t in &ranked[..n_top] {
        score_prior += space.prior_pdf(&t.configuration, prior_center, None)?;
        score_inc += space.prior_pdf(&t.configuration, incumbent, None)?;
    }
    let total = score_prior + score_inc;
    if !total.is_finite() || total <= 0.0 {
        return Ok((0.5, 0.5));
    }
    Ok((score_prior / total, score_inc / total))
}

/// Weights for bracket counter `r` given the history so far.
pub fn sampler_weights(
    r: usize,
    eta: u64,
    space: &SearchSpace,
    history: &RunHistory,
    b_max: u64,
    mode: Mode,
) -> Result<SamplerWeights, RunError> {
    if !history.has_max_budget_trial(b_max) {
        return Ok(SamplerWeights::scheduled(r, eta));
    }
    let incumbent = mode_incumbent(history, mode)?;
    let shares = dynamic_weighting(
        space,
        history,
        &space.default_configuration(),
        &incumbent.configuration,
        eta,
        b_max,
    )?;
    Ok(SamplerWeights::with_shares(r, eta, shares))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: Mode,
    pub policy: Policy,
    pub charge: ChargeMode,
    pub seed: u64,
    /// Concurrent evaluations within one rung.
    pub workers: usize,
    /// Stop after this many brackets.
    pub max_brackets: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            policy: Policy::default(),
            charge: ChargeMode::default(),
            seed: 0,
            workers: 1,
            max_brackets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightTrace {
    pub bracket: usize,
    pub r: usize,
    pub weights: SamplerWeights,
}

/// Promotion decisions of one rung, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungRecord {
    pub bracket: usize,
    pub rung: usize,
    pub evaluated: Vec<u64>,
    pub promoted: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub options: RunOptions,
    pub ladder: BudgetLadder,
    pub history: RunHistory,
    pub final_incumbent: Option<Trial>,
    pub sampling_incumbent: Option<Trial>,
    pub pareto_front: Vec<Trial>,
    pub weight_traces: Vec<WeightTrace>,
    pub rungs: Vec<RungRecord>,
}

struct Job {
    config_id: u64,
    configuration: Configuration,
    strategy: SamplingTag,
    previous_budget: Option<u64>,
}

fn evaluate_all<P: Problem + ?Sized>(
    problem: &P,
    jobs: &[Job],
    budget: u64,
    rung: usize,
    charge: ChargeMode,
    run_seed: u64,
    workers: usize,
) -> Vec<Result<Objectives, HarnessError>> {
    let call = |j: &Job| {
        problem.evaluate(&EvalRequest {
            config_id: j.config_id,
            config: &j.configuration,
            budget,
            previous_budget: match charge {
                ChargeMode::Continuation => j.previous_budget,
                ChargeMode::Restart => None,
            },
            seed: seed::evaluation_seed(run_seed, j.config_id, rung),
        })
    };
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(call).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Objectives, HarnessError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = call(&jobs[i]);
                slots.lock().expect("slots")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("slots").into_iter().map(|r| r.expect("evaluated")).collect()
}

fn counts_as_failed_trial(e: &HarnessError) -> bool {
    matches!(
        e,
        HarnessError::Timeout(_)
            | HarnessError::ProtocolError(_)
            | HarnessError::EvaluatorReportedFailure(_)
            | HarnessError::MissingEntry { .. }
    )
}

struct Runner<'a, P: Problem + ?Sized> {
    problem: &'a P,
    ladder: &'a BudgetLadder,
    options: RunOptions,
    history: RunHistory,
}

impl<P: Problem + ?Sized> Runner<'_, P> {
    /// Evaluates a rung and appends its trials in job order. Returns the
    /// position in `jobs` and cost of every successful evaluation.
    fn rung(&mut self, jobs: &[Job], bracket: Option<usize>, rung: usize) -> Result<Vec<(usize, CostVector)>, RunError> {
        let budget = self.ladder.budget(rung);
        let o = &self.options;
        let results = evaluate_all(self.problem, jobs, budget, rung, o.charge, o.seed, o.workers);
        let mut ok = Vec::new();
        for (i, (job, result)) in jobs.iter().zip(results).enumerate() {
            let (cost, status) = match result {
                Ok(c) => {
                    ok.push((i, c));
                    (Some(c), TrialStatus::Ok)
                }
                Err(e) if counts_as_failed_trial(&e) => {
                    log::warn!("config {} at budget {budget} failed: {e}", job.config_id);
                    (None, TrialStatus::Failed)
                }
                Err(source) => {
                    return Err(RunError::Evaluation { config_id: job.config_id, budget, source })
                }
            };
            let charged = match (o.charge, job.previous_budget) {
                (ChargeMode::Continuation, Some(prev)) => budget - prev,
                _ => budget,
            };
            self.history.push(Trial {
                config_id: job.config_id,
                configuration: job.configuration.clone(),
                bracket,
                rung,
                budget,
                previous_budget: job.previous_budget,
                charged_epochs: charged,
                cost,
                status,
                strategy: job.strategy,
                seed: seed::evaluation_seed(o.seed, job.config_id, rung),
            });
        }
        Ok(ok)
    }
}

/// Positions (into the rung's job list) of the `k` configurations to
/// promote, in job order.
fn promote(ok: &[(usize, CostVector)], k: usize, mode: Mode) -> Result<Vec<usize>, RunError> {
    let k = k.min(ok.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut chosen: Vec<usize> = match mode {
        Mode::Regularized => {
            let costs: Vec<CostVector> = ok.iter().map(|(_, c)| *c).collect();
            moo::select_top_k(&costs, k)?.into_iter().map(|i| ok[i].0).collect()
        }
        Mode::PriorBand => {
            let mut order: Vec<usize> = (0..ok.len()).collect();
            order.sort_by(|&a, &b| ok[a].1.primary.total_cmp(&ok[b].1.primary).then(a.cmp(&b)));
            order.into_iter().take(k).map(|i| ok[i].0).collect()
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Runs the default evaluation and then every bracket of the plan.
pub fn run<P: Problem + ?Sized>(
    space: &SearchSpace,
    problem: &P,
    ladder: &BudgetLadder,
    options: &RunOptions,
) -> Result<RunResult, RunError> {
    if options.workers == 0 {
        return Err(RunError::NoWorkers);
    }
    let mut rng = seed::rng(seed::derive("run", &[&options.seed.to_le_bytes()]));
    let plan = bracket_plan(ladder, options.policy);
    let mut runner = Runner { problem, ladder, options: *options, history: RunHistory::new() };
    let mut next_id = 0u64;
    let mut traces = Vec::new();
    let mut rungs = Vec::new();

    let default = Job {
        config_id: next_id,
        configuration: space.default_configuration(),
        strategy: SamplingTag::Default,
        previous_budget: None,
    };
    next_id += 1;
    runner.rung(std::slice::from_ref(&default), None, ladder.top_rung())?;

    let n_brackets = options.max_brackets.unwrap_or(usize::MAX);
    for (r, bracket) in plan.brackets.iter().enumerate().take(n_brackets) {
        let weights = sampler_weights(r, ladder.eta, space, &runner.history, ladder.b_max, options.mode)?;
        traces.push(WeightTrace { bracket: bracket.s, r, weights });
        let center = match weights.p_incumbent > 0.0 {
            true => Some(mode_incumbent(&runner.history, options.mode)?.configuration.clone()),
            false => None,
        };

        let mut jobs: Vec<Job> = (0..bracket.n_configs())
            .map(|_| {
                let tag = weights.draw(&mut rng);
                let strategy = match (tag, &center) {
                    (SamplingTag::Random, _) => SamplingStrategy::Uniform,
                    (SamplingTag::Incumbent, Some(c)) => SamplingStrategy::Around { center: c, confidence: None },
                    _ => SamplingStrategy::Prior,
                };
                let configuration = space.sample_with(&strategy, &mut rng);
                let job = Job { config_id: next_id, configuration, strategy: tag, previous_budget: None };
                next_id += 1;
                job
            })
            .collect();

        for (j, _) in bracket.rung_sizes.iter().enumerate() {
            let rung = bracket.start_rung + j;
            let ok = runner.rung(&jobs, Some(bracket.s), rung)?;
            let evaluated = jobs.iter().map(|j| j.config_id).collect();
            let Some(&k) = bracket.rung_sizes.get(j + 1) else {
                rungs.push(RungRecord { bracket: bracket.s, rung, evaluated, promoted: Vec::new() });
                break;
            };
            let keep = promote(&ok, k, options.mode)?;
            let budget = ladder.budget(rung);
            let mut previous: Vec<Option<Job>> = jobs.into_iter().map(Some).collect();
            jobs = keep
                .into_iter()
                .map(|i| Job { previous_budget: Some(budget), ..previous[i].take().expect("promoted once") })
                .collect();
            rungs.push(RungRecord {
                bracket: bracket.s,
                rung,
                evaluated,
                promoted: jobs.iter().map(|j| j.config_id).collect(),
            });
            if jobs.is_empty() {
                break;
            }
        }
    }

    let history = runner.history;
    let final_incumbent = final_incumbent(&history, ladder.b_max).ok().cloned();
    let sampling_incumbent = incumbent_for_sampling(&history).ok().cloned();
    let pareto_front = history.pareto_front().into_iter().cloned().collect();
    Ok(RunResult {
        options: *options,
        ladder: ladder.clone(),
        history,
        final_incumbent,
        sampling_incumbent,
        pareto_front,
        weight_traces: traces,
        rungs,
    })
}
