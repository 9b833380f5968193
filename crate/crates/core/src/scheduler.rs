//! HyperBand bookkeeping: geometric budget ladders, bracket plans for
//! successive halving and epoch accounting for continued or restarted runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configspace::Configuration;
use crate::moo::CostVector;
use crate::prior::round_half_up;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("invalid budgets: need 1 <= b_min ({b_min}) < b_max ({b_max}) and eta ({eta}) >= 2")]
    InvalidBudgets { b_min: u64, b_max: u64, eta: u64 },
    #[error("budgets must strictly increase along a promotion chain")]
    NonMonotoneBudgets,
}

/// Rung budgets `b_max * eta^(k - s_max)` rounded to whole epochs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLadder {
    pub b_min: u64,
    pub b_max: u64,
    pub eta: u64,
    pub s_max: usize,
    pub rung_budgets: Vec<u64>,
}

pub fn budget_ladder(b_min: u64, b_max: u64, eta: u64) -> Result<BudgetLadder, SchedulerError> {
    if b_min < 1 || b_min >= b_max || eta < 2 {
        return Err(SchedulerError::InvalidBudgets { b_min, b_max, eta });
    }
    // integer search avoids log() rounding at exact powers
    let mut s_max = 0usize;
    let mut reach = b_min as u128;
    while reach * eta as u128 <= b_max as u128 {
        reach *= eta as u128;
        s_max += 1;
    }
    let rung_budgets = (0..=s_max)
        .map(|k| {
            let b = b_max as f64 * (eta as f64).powi(k as i32 - s_max as i32);
            (round_half_up(b) as u64).max(1)
        })
        .collect();
    Ok(BudgetLadder { b_min, b_max, eta, s_max, rung_budgets })
}

impl BudgetLadder {
    pub fn top_rung(&self) -> usize {
        self.s_max
    }

    pub fn budget(&self, rung: usize) -> u64 {
        self.rung_budgets[rung]
    }
}

/// How many configurations each bracket starts with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// `n = ceil((s_max + 1) / (s + 1) * eta^s)`.
    #[default]
    StandardHb,
    /// `n = ceil(s_max / (s + 1))`.
    AsWritten,
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard-hb" => Ok(Policy::StandardHb),
            "as-written" => Ok(Policy::AsWritten),
            other => Err(format!("unknown policy `{other}` (expected standard-hb or as-written)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub start_rung: usize,
    /// Number of configurations evaluated at rung `start_rung + j`.
    pub rung_sizes: Vec<usize>,
}

impl Bracket {
    pub fn n_configs(&self) -> usize {
        self.rung_sizes[0]
    }
}

/// Brackets in execution order, `s = s_max` down to `0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketPlan {
    pub brackets: Vec<Bracket>,
}

pub fn bracket_plan(ladder: &BudgetLadder, policy: Policy) -> BracketPlan {
    let s_max = ladder.s_max;
    let eta = ladder.eta;
    let brackets = (0..=s_max)
        .rev()
        .map(|s| {
            let n = match policy {
                Policy::StandardHb => {
                    let num = (s_max as u128 + 1) * (eta as u128).pow(s as u32);
                    num.div_ceil(s as u128 + 1) as usize
                }
                Policy::AsWritten => s_max.div_ceil(s + 1),
            }
            .max(1);
            let mut rung_sizes = vec![n];
            for _ in 0..s {
                let prev = *rung_sizes.last().expect("non-empty");
                rung_sizes.push((prev / eta as usize).max(1));
            }
            Bracket { s, start_rung: s_max - s, rung_sizes }
        })
        .collect();
    BracketPlan { brackets }
}

impl BracketPlan {
    pub fn total_configs(&self) -> usize {
        self.brackets.iter().map(Bracket::n_configs).sum()
    }

    /// Epochs spent by the whole plan when every promotion restarts training
    /// from scratch.
    pub fn restart_epochs(&self, ladder: &BudgetLadder) -> u64 {
        self.epochs(ladder, ChargeMode::Restart)
    }

    pub fn epochs(&self, ladder: &BudgetLadder, mode: ChargeMode) -> u64 {
        let mut total = 0;
        for b in &self.brackets {
            for (j, &n) in b.rung_sizes.iter().enumerate() {
                let rung = b.start_rung + j;
                let charge = match (mode, j) {
                    (ChargeMode::Continuation, j) if j > 0 => ladder.budget(rung) - ladder.budget(rung - 1),
                    _ => ladder.budget(rung),
                };
                total += n as u64 * charge;
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeMode {
    /// Promoted runs resume from their previous budget.
    #[default]
    Continuation,
    Restart,
}

impl std::str::FromStr for ChargeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continuation" => Ok(ChargeMode::Continuation),
            "restart" => Ok(ChargeMode::Restart),
            other => Err(format!("unknown charge mode `{other}` (expected continuation or restart)")),
        }
    }
}

/// Epochs charged for one configuration's chain of evaluations.
pub fn charge_cost(budgets: &[u64], mode: ChargeMode) -> Result<u64, SchedulerError> {
    if budgets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SchedulerError::NonMonotoneBudgets);
    }
    Ok(match mode {
        ChargeMode::Continuation => budgets.last().copied().unwrap_or(0),
        ChargeMode::Restart => budgets.iter().sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingTag {
    Random,
    Prior,
    Incumbent,
    Default,
}

impl SamplingTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingTag::Random => "random",
            SamplingTag::Prior => "prior",
            SamplingTag::Incumbent => "incumbent",
            SamplingTag::Default => "default",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        }
    }
}

/// One evaluation of one configuration at one rung.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub config_id: u64,
    pub configuration: Configuration,
    /// `None` for the initial default evaluation.
    pub bracket: Option<usize>,
    pub rung: usize,
    pub budget: u64,
    pub previous_budget: Option<u64>,
    /// Epochs charged for this evaluation alone.
    pub charged_epochs: u64,
    /// Present iff `status` is `Ok`.
    pub cost: Option<CostVector>,
    pub status: TrialStatus,
    pub strategy: SamplingTag,
    pub seed: u64,
}

impl Trial {
    pub fn ok_cost(&self) -> Option<CostVector> {
        match self.status {
            TrialStatus::Ok => self.cost,
            TrialStatus::Failed => None,
        }
    }
}
