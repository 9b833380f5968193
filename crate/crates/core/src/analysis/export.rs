//! Report files of a run: the trial history, the Pareto front with both
//! incumbents, the incumbent trajectory and a replay table.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnalysisError, ImportanceReport};
use crate::configspace::{SearchSpace, Value};
use crate::harness::write_replay_table;
use crate::moo::CostVector;
use crate::priorband::{final_incumbent, incumbent_for_sampling, RunHistory, RunResult};
use crate::scheduler::{SamplingTag, Trial, TrialStatus};
use crate::seed;

const HISTORY_HEADER: [&str; 12] = [
    "run_seed",
    "bracket",
    "rung",
    "config_id",
    "strategy",
    "budget_epochs",
    "primary_cost",
    "runtime_hours",
    "charged_epochs_cumulative",
    "status",
    "serialized_config",
    "serialized_architecture",
];

pub fn write_history_csv<W: Write>(history: &RunHistory, run_seed: u64, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HISTORY_HEADER)?;
    let mut cumulative = 0u64;
    for t in history.trials() {
        cumulative += t.charged_epochs;
        let (p, r) = match t.ok_cost() {
            Some(c) => (c.primary.to_string(), c.runtime_hours.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            run_seed.to_string(),
            t.bracket.map(|b| b.to_string()).unwrap_or_default(),
            t.rung.to_string(),
            t.config_id.to_string(),
            t.strategy.as_str().to_string(),
            t.budget.to_string(),
            p,
            r,
            cumulative.to_string(),
            t.status.as_str().to_string(),
            t.configuration.values_json(),
            t.configuration.architecture_string().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn history_csv(history: &RunHistory, run_seed: u64) -> String {
    let mut out = Vec::new();
    write_history_csv(history, run_seed, &mut out).expect("in-memory write");
    String::from_utf8(out).expect("utf-8")
}

/// Rebuilds a history from its CSV export. Returns the run seed found in
/// the file (0 for an empty file) alongside.
pub fn read_history_csv<R: Read>(space: &SearchSpace, reader: R) -> Result<(RunHistory, u64), AnalysisError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HISTORY_HEADER {
        return Err(AnalysisError::MalformedHistory { line: 1, reason: "unexpected header".into() });
    }
    let mut history = RunHistory::new();
    let mut last_budget: BTreeMap<u64, u64> = BTreeMap::new();
    let mut cumulative = 0u64;
    let mut run_seed = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let bad = |reason: &str| AnalysisError::MalformedHistory { line, reason: reason.to_string() };
        let int = |k: usize| rec[k].parse::<u64>().map_err(|_| bad(HISTORY_HEADER[k]));
        let float = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(HISTORY_HEADER[k]));
        run_seed = int(0)?;
        let bracket = if rec[1].is_empty() { None } else { Some(int(1)? as usize) };
        let rung = int(2)? as usize;
        let config_id = int(3)?;
        let strategy = match &rec[4] {
            "random" => SamplingTag::Random,
            "prior" => SamplingTag::Prior,
            "incumbent" => SamplingTag::Incumbent,
            "default" => SamplingTag::Default,
            _ => return Err(bad("strategy")),
        };
        let budget = int(5)?;
        let status = match &rec[9] {
            "ok" => TrialStatus::Ok,
            "failed" => TrialStatus::Failed,
            _ => return Err(bad("status")),
        };
        let cost = match status {
            TrialStatus::Ok => Some(CostVector::new(float(6)?, float(7)?)),
            TrialStatus::Failed => None,
        };
        let total = int(8)?;
        let charged = total.checked_sub(cumulative).ok_or_else(|| bad("charged_epochs_cumulative"))?;
        cumulative = total;
        let arch = Some(&rec[11]).filter(|s| !s.is_empty());
        let configuration = space.parse_configuration(&rec[10], arch)?;
        let previous_budget = last_budget.insert(config_id, budget);
        history.push(Trial {
            config_id,
            configuration,
            bracket,
            rung,
            budget,
            previous_budget,
            charged_epochs: charged,
            cost,
            status,
            strategy,
            seed: seed::evaluation_seed(run_seed, config_id, rung),
        });
    }
    Ok((history, run_seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config_id: u64,
    pub budget: u64,
    pub config: BTreeMap<String, Value>,
    pub architecture: Option<String>,
    pub primary: f64,
    pub runtime_hours: f64,
}

impl ParetoPoint {
    fn of(t: &Trial) -> Self {
        let c = t.cost.expect("ok trial");
        Self {
            config_id: t.config_id,
            budget: t.budget,
            config: t.configuration.values.clone(),
            architecture: t.configuration.architecture_string(),
            primary: c.primary,
            runtime_hours: c.runtime_hours,
        }
    }
}

/// Contents of `pareto.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub front: Vec<ParetoPoint>,
    pub final_incumbent: Option<ParetoPoint>,
    pub sampling_incumbent: Option<ParetoPoint>,
}

impl ParetoReport {
    pub fn from_history(history: &RunHistory, b_max: u64) -> Self {
        Self {
            front: history.pareto_front().into_iter().map(ParetoPoint::of).collect(),
            final_incumbent: final_incumbent(history, b_max).ok().map(ParetoPoint::of),
            sampling_incumbent: incumbent_for_sampling(history).ok().map(ParetoPoint::of),
        }
    }

    pub fn from_result(result: &RunResult) -> Self {
        Self {
            front: result.pareto_front.iter().map(ParetoPoint::of).collect(),
            final_incumbent: result.final_incumbent.as_ref().map(ParetoPoint::of),
            sampling_incumbent: result.sampling_incumbent.as_ref().map(ParetoPoint::of),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Cumulative charged epochs against the best full-budget primary cost seen
/// so far, one row per trial once such a result exists.
pub fn trajectory_csv(history: &RunHistory, b_max: u64) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["charged_epochs_cumulative", "config_id", "primary_cost"]).expect("in-memory write");
    let mut cumulative = 0;
    let mut best: Option<(f64, f64, u64)> = None;
    for t in history.trials() {
        cumulative += t.charged_epochs;
        if let (Some(c), true) = (t.ok_cost(), t.budget == b_max) {
            let cand = (c.primary, c.runtime_hours, t.config_id);
            let better = best.is_none_or(|b| {
                cand.0.total_cmp(&b.0).then(cand.1.total_cmp(&b.1)).then(cand.2.cmp(&b.2)).is_lt()
            });
            if better {
                best = Some(cand);
            }
        }
        if let Some((p, _, id)) = best {
            w.write_record([cumulative.to_string(), id.to_string(), p.to_string()]).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AnalysisError> {
    std::fs::write(path, bytes).map_err(|source| AnalysisError::Io { path: path.display().to_string(), source })
}

/// Writes `history.csv`, `pareto.json`, `incumbent_trajectory.csv`,
/// `replay.csv` and, if given, `importance.json` into `out_dir`.
pub fn export_reports(
    result: &RunResult,
    out_dir: &Path,
    importance: Option<&ImportanceReport>,
) -> Result<Vec<PathBuf>, AnalysisError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|source| AnalysisError::Io { path: out_dir.display().to_string(), source })?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<(), AnalysisError> {
        let path = out_dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    put("history.csv", history_csv(&result.history, result.options.seed).into_bytes())?;
    put("pareto.json", ParetoReport::from_result(result).to_json().into_bytes())?;
    put("incumbent_trajectory.csv", trajectory_csv(&result.history, result.ladder.b_max).into_bytes())?;
    let mut replay = Vec::new();
    write_replay_table(result.history.trials(), &mut replay)?;
    put("replay.csv", replay)?;
    if let Some(report) = importance {
        put("importance.json", report.to_json().into_bytes())?;
    }
    Ok(written)
}
