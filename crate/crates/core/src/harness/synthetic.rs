//! A deterministic stand-in for network training: a Gaussian bump around a
//! hidden optimum, scaled by a saturating learning curve, with runtime
//! growing in the capacity-like parameters.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EvalRequest, HarnessError, Objectives, Problem};
use crate::configspace::{Configuration, SearchSpace, Value};
use crate::grammar::extract_features;
use crate::seed;

/// Pseudo-parameter names exposing architecture features to the objective.
pub const ARCH_N_STAGES: &str = "arch.n_stages";
pub const ARCH_TOTAL_BLOCKS: &str = "arch.total_blocks";

const DEFAULT_SIZE_PARAMETERS: [&str; 3] = ["model_scale", "base_num_features", "max_num_features"];

/// `parameter` only matters while `parent` takes one of `active_values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parameter: String,
    pub parent: String,
    pub active_values: Vec<Value>,
}

/// User-facing description of a synthetic problem. Every field has a
/// default, so `{}` is a valid problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Optimum in normalized coordinates; missing entries are drawn from
    /// `problem_seed`.
    pub optimum: BTreeMap<String, f64>,
    /// Relevance weights; missing entries are 1.
    pub weights: BTreeMap<String, f64>,
    pub curvature: f64,
    /// Hours per epoch at the smallest size.
    pub tau0: f64,
    pub size_parameters: Option<Vec<String>>,
    pub conditions: Option<Vec<Condition>>,
    pub noise: f64,
    pub problem_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            optimum: BTreeMap::new(),
            weights: BTreeMap::new(),
            curvature: 3.0,
            tau0: 0.01,
            size_parameters: None,
            conditions: None,
            noise: 0.0,
            problem_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Dim {
    name: String,
    optimum: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    space: SearchSpace,
    spec: SyntheticSpec,
    b_max: u64,
    /// Sorted by name so the objective does not depend on declaration order.
    dims: Vec<Dim>,
    size: Vec<String>,
    conditions: Vec<Condition>,
    blocks_range: (f64, f64),
    stages_range: (f64, f64),
}

impl SyntheticProblem {
    pub fn new(space: SearchSpace, b_max: u64, spec: SyntheticSpec) -> Result<Self, HarnessError> {
        let invalid = |m: String| HarnessError::InvalidSynthetic(m);
        if !spec.curvature.is_finite() || spec.curvature <= 0.0 {
            return Err(invalid("curvature must be positive".into()));
        }
        if spec.tau0.is_nan() || spec.tau0 <= 0.0 || spec.noise.is_nan() || spec.noise < 0.0 || b_max < 1 {
            return Err(invalid("tau0 must be positive, noise non-negative, b_max >= 1".into()));
        }

        let mut names: Vec<String> = space.parameters().iter().map(|p| p.name.clone()).collect();
        let mut stages_range = (0.0, 0.0);
        let mut blocks_range = (0.0, 0.0);
        if let Some(g) = space.grammar() {
            names.push(ARCH_N_STAGES.to_string());
            names.push(ARCH_TOTAL_BLOCKS.to_string());
            let p = g.profile().ok_or_else(|| invalid("grammar is not a U-Net grammar".into()))?;
            let n = p.n_stages_max;
            let lo = (n / 2).max(2).min(n);
            stages_range = (lo as f64, n as f64);
            let b = &p.default_blocks;
            let s = p.model_scale_max;
            let enc: usize = (0..n).map(|i| s * b.conv[i].max(b.residual[i])).sum();
            let dec: usize = b.decoder.iter().map(|d| s * d).sum();
            blocks_range = ((2 * lo - 1) as f64, (enc + dec) as f64);
        }
        names.sort();
        for key in spec.optimum.keys().chain(spec.weights.keys()) {
            if names.binary_search(key).is_err() {
                return Err(invalid(format!("unknown dimension `{key}`")));
            }
        }

        let mut rng = seed::rng(seed::derive("synthetic-optimum", &[&spec.problem_seed.to_le_bytes()]));
        let mut dims = Vec::with_capacity(names.len());
        for name in &names {
            let drawn: f64 = rand::Rng::random(&mut rng);
            let u = spec.optimum.get(name).copied().unwrap_or(drawn);
            if !(0.0..=1.0).contains(&u) {
                return Err(invalid(format!("optimum of `{name}` outside [0, 1]")));
            }
            let w = spec.weights.get(name).copied().unwrap_or(1.0);
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("weight of `{name}` must be non-negative")));
            }
            // snap to a value the space can actually represent
            let optimum = match space.parameter(name) {
                Some(p) => p.normalize_value(&p.denormalize_value(u))?,
                None => u,
            };
            dims.push(Dim { name: name.clone(), optimum, weight: w });
        }
        if !dims.iter().any(|d| d.weight > 0.0) {
            return Err(invalid("at least one weight must be positive".into()));
        }

        let size = match &spec.size_parameters {
            Some(s) => {
                for n in s {
                    if names.binary_search(n).is_err() {
                        return Err(invalid(format!("unknown size parameter `{n}`")));
                    }
                }
                s.clone()
            }
            None => {
                let mut s: Vec<String> = DEFAULT_SIZE_PARAMETERS
                    .iter()
                    .filter(|n| space.parameter(n).is_some())
                    .map(|n| n.to_string())
                    .collect();
                if space.grammar().is_some() {
                    s.push(ARCH_TOTAL_BLOCKS.to_string());
                }
                s
            }
        };

        let conditions = match &spec.conditions {
            Some(c) => c.clone(),
            None if space.parameter("momentum").is_some() && space.parameter("optimizer").is_some() => {
                vec![Condition {
                    parameter: "momentum".into(),
                    parent: "optimizer".into(),
                    active_values: vec![Value::from("SGD")],
                }]
            }
            None => Vec::new(),
        };

        Ok(Self { space, spec, b_max, dims, size, conditions, blocks_range, stages_range })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn b_max(&self) -> u64 {
        self.b_max
    }

    /// Snapped optimum per dimension, in name order.
    pub fn optimum(&self) -> BTreeMap<String, f64> {
        self.dims.iter().map(|d| (d.name.clone(), d.optimum)).collect()
    }

    /// The hyperparameter values at the optimum. The architecture, if any,
    /// is the grammar's default derivation.
    pub fn optimum_configuration(&self) -> Configuration {
        let coords: Vec<f64> = self
            .space
            .parameters()
            .iter()
            .map(|p| self.dims.iter().find(|d| d.name == p.name).expect("dimension").optimum)
            .collect();
        Configuration {
            values: self.space.denormalize(&coords),
            architecture: self.space.grammar().map(|g| g.default_derivation()),
        }
    }

    fn coordinates(&self, config: &Configuration) -> Result<BTreeMap<String, f64>, HarnessError> {
        self.space.validate(config)?;
        let mut u = BTreeMap::new();
        for (p, x) in self.space.parameters().iter().zip(self.space.normalize(config)?) {
            u.insert(p.name.clone(), x);
        }
        if let Some(d) = &config.architecture {
            let f = extract_features(d).map_err(crate::configspace::SpaceError::from)?;
            let unit = |v: f64, (lo, hi): (f64, f64)| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
            u.insert(ARCH_N_STAGES.to_string(), unit(f.n_stages as f64, self.stages_range));
            u.insert(ARCH_TOTAL_BLOCKS.to_string(), unit(f.total_blocks() as f64, self.blocks_range));
        }
        Ok(u)
    }

    fn is_active(&self, name: &str, config: &Configuration) -> bool {
        self.conditions.iter().filter(|c| c.parameter == name).all(|c| {
            config
                .values
                .get(&c.parent)
                .is_some_and(|v| c.active_values.iter().any(|a| a == v))
        })
    }

    /// Learning-curve factor in `(0, 1]`, equal to 1 at `b_max`.
    pub fn learning_curve(&self, budget: u64) -> f64 {
        let rho = self.spec.curvature;
        (1.0 - (-rho * budget as f64 / self.b_max as f64).exp()) / (1.0 - (-rho).exp())
    }

    pub fn quality(&self, config: &Configuration) -> Result<f64, HarnessError> {
        let u = self.coordinates(config)?;
        let mut sum = 0.0;
        for d in &self.dims {
            if !self.is_active(&d.name, config) {
                continue;
            }
            let x = u[&d.name];
            sum += d.weight * (x - d.optimum).powi(2);
        }
        Ok((-sum).exp())
    }

    pub fn evaluate_config(&self, config: &Configuration, budget: u64, seed: u64) -> Result<Objectives, HarnessError> {
        if budget < 1 || budget > self.b_max {
            return Err(HarnessError::BudgetOutOfRange { budget, b_max: self.b_max });
        }
        let u = self.coordinates(config)?;
        let q = self.quality(config)?;
        let mut primary = 1.0 - q * self.learning_curve(budget);
        if self.spec.noise > 0.0 {
            let sd = self.spec.noise * (self.b_max as f64 / budget as f64).sqrt();
            let s = seed::derive(
                "synthetic-noise",
                &[
                    &self.spec.problem_seed.to_le_bytes(),
                    config.key().as_bytes(),
                    &budget.to_le_bytes(),
                    &seed.to_le_bytes(),
                ],
            );
            primary += Normal::new(0.0, sd).expect("finite sd").sample(&mut seed::rng(s));
        }
        let scale: f64 = self.size.iter().map(|n| 1.0 + u[n]).product();
        Ok(Objectives::new(primary.clamp(0.0, 1.0), budget as f64 * self.spec.tau0 * scale))
    }
}

impl Problem for SyntheticProblem {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<Objectives, HarnessError> {
        self.evaluate_config(request.config, request.budget, request.seed)
    }
}
