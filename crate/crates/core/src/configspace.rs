//! Typed hyperparameter search spaces.
//!
//! Every parameter maps into the unit interval: floats and integers
//! affinely, log-floats affinely after taking logs, ordinals and
//! categoricals by `index / (K - 1)`. Priors live in that normalized space.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Derivation, DerivationSampling, Grammar, GrammarError, GrammarSpec};
use crate::prior::{self, Confidence, UnitTruncatedNormal};
use crate::seed;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("search space has no parameters and no architecture")]
    EmptyDomain,
    #[error("parameter `{0}` has an empty domain")]
    EmptyParameterDomain(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("default of `{0}` lies outside its domain")]
    DefaultOutOfDomain(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),
    #[error("value of `{0}` lies outside its domain")]
    OutOfDomain(String),
    #[error("configuration architecture does not match the space: {0}")]
    Architecture(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("cannot read space file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed space definition: {0}")]
    Json(#[from] serde_json::Error),
}

/// A hyperparameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(f) => Some(f),
            Value::Str(_) => None,
        }
    }

    /// Equality that treats `1` and `1.0` as the same value.
    pub fn same(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Str(_), _) | (_, Value::Str(_)) => false,
            (a, b) => a.as_f64() == b.as_f64(),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.same(other)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Float,
    LogFloat,
    Integer,
    Ordinal,
    Categorical,
}

/// One hyperparameter: kind, domain, default and prior confidence. The
/// serde shape is the entry format of space-definition files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Value>>,
    pub default: Value,
    #[serde(default)]
    pub confidence: Confidence,
    /// Overrides the confidence-derived prior standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl ParameterSpec {
    fn numeric(name: &str, kind: ParamKind, lo: f64, hi: f64, default: Value) -> Self {
        Self {
            name: name.to_string(),
            kind,
            lo: Some(lo),
            hi: Some(hi),
            values: None,
            default,
            confidence: Confidence::default(),
            sigma: None,
        }
    }

    pub fn float(name: &str, lo: f64, hi: f64, default: f64) -> Self {
        Self::numeric(name, ParamKind::Float, lo, hi, Value::Float(default))
    }

    pub fn log_float(name: &str, lo: f64, hi: f64, default: f64) -> Self {
        Self::numeric(name, ParamKind::LogFloat, lo, hi, Value::Float(default))
    }

    pub fn integer(name: &str, lo: i64, hi: i64, default: i64) -> Self {
        Self::numeric(name, ParamKind::Integer, lo as f64, hi as f64, Value::Int(default))
    }

    fn listed(name: &str, kind: ParamKind, values: Vec<Value>, default: Value) -> Self {
        Self {
            name: name.to_string(),
            kind,
            lo: None,
            hi: None,
            values: Some(values),
            default,
            confidence: Confidence::default(),
            sigma: None,
        }
    }

    pub fn ordinal(name: &str, values: Vec<Value>, default: Value) -> Self {
        Self::listed(name, ParamKind::Ordinal, values, default)
    }

    pub fn categorical(name: &str, values: &[&str], default: &str) -> Self {
        Self::listed(
            name,
            ParamKind::Categorical,
            values.iter().map(|&v| Value::from(v)).collect(),
            Value::from(default),
        )
    }

    pub fn with_confidence(mut self, confidence: Confidence) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    fn range(&self) -> (f64, f64) {
        (self.lo.unwrap_or(0.0), self.hi.unwrap_or(0.0))
    }

    fn choices(&self) -> &[Value] {
        self.values.as_deref().unwrap_or(&[])
    }

    fn index_of(&self, v: &Value) -> Option<usize> {
        self.choices().iter().position(|c| c.same(v))
    }

    fn prior_sigma(&self, confidence: Option<Confidence>) -> f64 {
        match confidence {
            Some(c) => c.sigma(),
            None => self.sigma.unwrap_or_else(|| self.confidence.sigma()),
        }
    }

    /// Validates the parameter definition and brings numeric values into canonical form
    /// (`Float` for float kinds, `Int` for integers).
    fn validated(mut self) -> Result<Self, SpaceError> {
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name must not be empty"));
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid("sigma must be positive"));
            }
        }
        match self.kind {
            ParamKind::Float | ParamKind::LogFloat | ParamKind::Integer => {
                let (Some(lo), Some(hi)) = (self.lo, self.hi) else {
                    return Err(invalid("numeric parameters need `lo` and `hi`"));
                };
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(invalid("bounds must be finite"));
                }
                if lo >= hi {
                    return Err(SpaceError::EmptyParameterDomain(self.name.clone()));
                }
                if self.kind == ParamKind::LogFloat && lo <= 0.0 {
                    return Err(invalid("log-float needs a positive lower bound"));
                }
                let d = self
                    .default
                    .as_f64()
                    .ok_or_else(|| SpaceError::DefaultOutOfDomain(self.name.clone()))?;
                if self.kind == ParamKind::Integer {
                    if lo.fract() != 0.0 || hi.fract() != 0.0 {
                        return Err(invalid("integer bounds must be integral"));
                    }
                    if d.fract() != 0.0 {
                        return Err(SpaceError::DefaultOutOfDomain(self.name.clone()));
                    }
                    self.default = Value::Int(d as i64);
                } else {
                    self.default = Value::Float(d);
                }
                if !(lo..=hi).contains(&d) {
                    return Err(SpaceError::DefaultOutOfDomain(self.name.clone()));
                }
            }
            ParamKind::Ordinal | ParamKind::Categorical => {
                let values = self.choices();
                if values.is_empty() {
                    return Err(SpaceError::EmptyParameterDomain(self.name.clone()));
                }
                for (i, v) in values.iter().enumerate() {
                    if values[..i].iter().any(|w| w.same(v)) {
                        return Err(invalid("duplicate value"));
                    }
                }
                if self.index_of(&self.default).is_none() {
                    return Err(SpaceError::DefaultOutOfDomain(self.name.clone()));
                }
            }
        }
        Ok(self)
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self.kind {
            ParamKind::Float | ParamKind::LogFloat => {
                let (lo, hi) = self.range();
                matches!(v, Value::Float(_) | Value::Int(_))
                    && v.as_f64().is_some_and(|x| (lo..=hi).contains(&x))
            }
            ParamKind::Integer => {
                let (lo, hi) = self.range();
                v.as_f64().is_some_and(|x| x.fract() == 0.0 && (lo..=hi).contains(&x))
            }
            ParamKind::Ordinal | ParamKind::Categorical => self.index_of(v).is_some(),
        }
    }

    /// Number of discrete choices, `None` for continuous kinds.
    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            ParamKind::Float | ParamKind::LogFloat => None,
            ParamKind::Integer => {
                let (lo, hi) = self.range();
                Some((hi - lo) as usize + 1)
            }
            ParamKind::Ordinal | ParamKind::Categorical => Some(self.choices().len()),
        }
    }

    pub fn normalize_value(&self, v: &Value) -> Result<f64, SpaceError> {
        if !self.contains(v) {
            return Err(SpaceError::OutOfDomain(self.name.clone()));
        }
        let (lo, hi) = self.range();
        Ok(match self.kind {
            ParamKind::Float | ParamKind::Integer => (v.as_f64().unwrap() - lo) / (hi - lo),
            ParamKind::LogFloat => {
                (v.as_f64().unwrap().ln() - lo.ln()) / (hi.ln() - lo.ln())
            }
            ParamKind::Ordinal | ParamKind::Categorical => {
                let k = self.choices().len();
                if k == 1 {
                    0.0
                } else {
                    self.index_of(v).unwrap() as f64 / (k - 1) as f64
                }
            }
        })
    }

    /// Inverse of [`normalize_value`](Self::normalize_value); discrete kinds
    /// round half-up to the nearest index.
    pub fn denormalize_value(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        let (lo, hi) = self.range();
        match self.kind {
            ParamKind::Float => Value::Float((lo + u * (hi - lo)).clamp(lo, hi)),
            ParamKind::LogFloat => {
                Value::Float((lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi))
            }
            ParamKind::Integer => {
                Value::Int(prior::round_half_up(lo + u * (hi - lo)).clamp(lo, hi) as i64)
            }
            ParamKind::Ordinal | ParamKind::Categorical => {
                let k = self.choices().len();
                let idx = prior::round_half_up(u * (k - 1) as f64) as usize;
                self.choices()[idx.min(k - 1)].clone()
            }
        }
    }

    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        let (lo, hi) = self.range();
        match self.kind {
            ParamKind::Float => Value::Float(rng.random_range(lo..=hi)),
            ParamKind::LogFloat => {
                Value::Float(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi))
            }
            ParamKind::Integer => Value::Int(rng.random_range(lo as i64..=hi as i64)),
            ParamKind::Ordinal | ParamKind::Categorical => {
                let k = self.choices().len();
                self.choices()[rng.random_range(0..k)].clone()
            }
        }
    }

    fn sample_around<R: Rng + ?Sized>(&self, center: &Value, sigma: f64, confidence: Confidence, rng: &mut R) -> Value {
        match self.kind {
            ParamKind::Categorical => {
                let k = self.choices().len();
                let d = self.index_of(center).unwrap_or(0);
                self.choices()[prior::sample_boosted(k, d, confidence, rng)].clone()
            }
            ParamKind::Ordinal => {
                let k = self.choices().len();
                let d = self.index_of(center).unwrap_or(0);
                self.choices()[prior::sample_ordered_index(k, d, sigma, rng)].clone()
            }
            _ => {
                let mu = self.normalize_value(center).unwrap_or(0.5);
                let u = UnitTruncatedNormal::new(mu, sigma).sample(rng);
                self.denormalize_value(u)
            }
        }
    }

    fn density_around(&self, v: &Value, center: &Value, sigma: f64, confidence: Confidence) -> Result<f64, SpaceError> {
        let u = self.normalize_value(v)?;
        let mu = self.normalize_value(center)?;
        Ok(match self.kind {
            ParamKind::Categorical => {
                let k = self.choices().len();
                prior::boosted_probability(k, self.index_of(v).unwrap(), self.index_of(center).unwrap(), confidence)
            }
            _ => UnitTruncatedNormal::new(mu, sigma).pdf(u),
        })
    }
}

/// Where a sample is drawn from.
#[derive(Debug, Clone, Copy)]
pub enum SamplingStrategy<'a> {
    Uniform,
    /// Truncated normals / boosted categoricals centered on the defaults,
    /// using each parameter's own confidence.
    Prior,
    /// The same machinery centered on `center`. Without an explicit level each
    /// parameter keeps its own confidence.
    Around { center: &'a Configuration, confidence: Option<Confidence> },
}

/// One point of a search space.
///
/// Serializes with the architecture as its composition string. Parsing the
/// architecture back needs the grammar, see
/// [`SearchSpace::parse_configuration`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Configuration {
    pub values: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "serialize_derivation")]
    pub architecture: Option<Derivation>,
}

fn serialize_derivation<S: serde::Serializer>(d: &Option<Derivation>, s: S) -> Result<S::Ok, S::Error> {
    match d {
        Some(d) => s.serialize_str(&d.serialize()),
        None => s.serialize_none(),
    }
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    /// Compact JSON object of the hyperparameter values in name order.
    pub fn values_json(&self) -> String {
        serde_json::to_string(&self.values).expect("values serialize")
    }

    pub fn architecture_string(&self) -> Option<String> {
        self.architecture.as_ref().map(|d| d.serialize())
    }

    /// Key identifying the configuration in replay tables.
    pub fn key(&self) -> String {
        match &self.architecture {
            None => self.values_json(),
            Some(d) => format!("{}|{}", self.values_json(), d.serialize()),
        }
    }
}

/// On-disk form of a space definition: either a bare parameter array or an
/// object with `parameters` and an optional `grammar`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SpaceFile {
    Bare(Vec<ParameterSpec>),
    Full {
        #[serde(default)]
        parameters: Vec<ParameterSpec>,
        #[serde(default)]
        grammar: Option<GrammarSpec>,
    },
}

/// A validated, immutable search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    parameters: Vec<ParameterSpec>,
    grammar: Option<(GrammarSpec, Grammar)>,
}

/// Validates `specs` and the optional grammar into a search space.
pub fn build_space(specs: Vec<ParameterSpec>, grammar: Option<GrammarSpec>) -> Result<SearchSpace, SpaceError> {
    if specs.is_empty() && grammar.is_none() {
        return Err(SpaceError::EmptyDomain);
    }
    let mut parameters = Vec::with_capacity(specs.len());
    for spec in specs {
        if parameters.iter().any(|p: &ParameterSpec| p.name == spec.name) {
            return Err(SpaceError::DuplicateName(spec.name));
        }
        parameters.push(spec.validated()?);
    }
    let grammar = match grammar {
        Some(g) => {
            let built = g.build()?;
            Some((g, built))
        }
        None => None,
    };
    Ok(SearchSpace { parameters, grammar })
}

impl SearchSpace {
    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        match serde_json::from_str::<SpaceFile>(text)? {
            SpaceFile::Bare(p) => build_space(p, None),
            SpaceFile::Full { parameters, grammar } => build_space(parameters, grammar),
        }
    }

    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SpaceError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = SpaceFile::Full {
            parameters: self.parameters.clone(),
            grammar: self.grammar.as_ref().map(|(s, _)| s.clone()),
        };
        serde_json::to_string_pretty(&file).expect("space serializes")
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.parameters
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn grammar(&self) -> Option<&Grammar> {
        self.grammar.as_ref().map(|(_, g)| g)
    }

    pub fn grammar_spec(&self) -> Option<&GrammarSpec> {
        self.grammar.as_ref().map(|(s, _)| s)
    }

    fn architecture_confidence(&self) -> Confidence {
        self.grammar_spec().map(|s| s.confidence).unwrap_or_default()
    }

    pub fn default_configuration(&self) -> Configuration {
        Configuration {
            values: self.parameters.iter().map(|p| (p.name.clone(), p.default.clone())).collect(),
            architecture: self.grammar().map(|g| g.default_derivation()),
        }
    }

    /// Copy of the space whose hyperparameter defaults (the prior center) are
    /// moved to `center`. The architecture prior is left unchanged.
    pub fn with_prior_center(&self, center: &Configuration) -> Result<SearchSpace, SpaceError> {
        let mut moved = self.clone();
        for p in &mut moved.parameters {
            let v = center.values.get(&p.name).ok_or_else(|| SpaceError::MissingParameter(p.name.clone()))?;
            p.default = v.clone();
            *p = p.clone().validated()?;
        }
        Ok(moved)
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        for name in config.values.keys() {
            if self.parameter(name).is_none() {
                return Err(SpaceError::UnknownParameter(name.clone()));
            }
        }
        for p in &self.parameters {
            let v = config.values.get(&p.name).ok_or_else(|| SpaceError::MissingParameter(p.name.clone()))?;
            if !p.contains(v) {
                return Err(SpaceError::OutOfDomain(p.name.clone()));
            }
        }
        match (self.grammar(), &config.architecture) {
            (None, None) => Ok(()),
            (Some(g), Some(d)) => Ok(g.validate(d)?),
            (Some(_), None) => Err(SpaceError::Architecture("missing architecture".into())),
            (None, Some(_)) => Err(SpaceError::Architecture("space has no architecture slot".into())),
        }
    }

    /// Unit-hypercube coordinates in parameter declaration order.
    pub fn normalize(&self, config: &Configuration) -> Result<Vec<f64>, SpaceError> {
        if let Some(name) = config.values.keys().find(|n| self.parameter(n).is_none()) {
            return Err(SpaceError::UnknownParameter(name.clone()));
        }
        self.parameters
            .iter()
            .map(|p| {
                let v = config.values.get(&p.name).ok_or_else(|| SpaceError::MissingParameter(p.name.clone()))?;
                p.normalize_value(v)
            })
            .collect()
    }

    /// Maps unit-hypercube coordinates back to values. The architecture is
    /// left empty.
    pub fn denormalize(&self, coords: &[f64]) -> BTreeMap<String, Value> {
        self.parameters
            .iter()
            .zip(coords)
            .map(|(p, &u)| (p.name.clone(), p.denormalize_value(u)))
            .collect()
    }

    /// Draws one configuration using a fresh generator seeded with `seed`.
    pub fn sample(&self, strategy: &SamplingStrategy<'_>, seed: u64) -> Configuration {
        self.sample_with(strategy, &mut seed::rng(seed))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, strategy: &SamplingStrategy<'_>, rng: &mut R) -> Configuration {
        let values = self
            .parameters
            .iter()
            .map(|p| {
                let v = match strategy {
                    SamplingStrategy::Uniform => p.sample_uniform(rng),
                    SamplingStrategy::Prior => {
                        p.sample_around(&p.default, p.prior_sigma(None), p.confidence, rng)
                    }
                    SamplingStrategy::Around { center, confidence } => {
                        let mid = center.values.get(&p.name).unwrap_or(&p.default);
                        p.sample_around(mid, p.prior_sigma(*confidence), confidence.unwrap_or(p.confidence), rng)
                    }
                };
                (p.name.clone(), v)
            })
            .collect();
        let architecture = self.grammar().map(|g| match strategy {
            SamplingStrategy::Uniform => g.sample(&DerivationSampling::Uniform, rng),
            SamplingStrategy::Prior => {
                let center = g.default_derivation();
                g.sample(
                    &DerivationSampling::Prior { center: &center, confidence: self.architecture_confidence() },
                    rng,
                )
            }
            SamplingStrategy::Around { center, confidence } => {
                let fallback;
                let c = match &center.architecture {
                    Some(d) => d,
                    None => {
                        fallback = g.default_derivation();
                        &fallback
                    }
                };
                g.sample(
                    &DerivationSampling::Prior { center: c, confidence: confidence.unwrap_or(self.architecture_confidence()) },
                    rng,
                )
            }
        });
        Configuration { values, architecture }
    }

    /// Prior density score of `config` for a prior centered on `center`.
    /// With `confidence = None` every parameter uses its own confidence (the
    /// prior over defaults); otherwise the given level applies everywhere.
    pub fn prior_pdf(
        &self,
        config: &Configuration,
        center: &Configuration,
        confidence: Option<Confidence>,
    ) -> Result<f64, SpaceError> {
        let mut score = 1.0;
        for p in &self.parameters {
            let v = config.values.get(&p.name).ok_or_else(|| SpaceError::MissingParameter(p.name.clone()))?;
            let c = center.values.get(&p.name).ok_or_else(|| SpaceError::MissingParameter(p.name.clone()))?;
            let conf = confidence.unwrap_or(p.confidence);
            score *= p.density_around(v, c, p.prior_sigma(confidence), conf)?;
        }
        if let Some(g) = self.grammar() {
            let (Some(d), Some(c)) = (&config.architecture, &center.architecture) else {
                return Err(SpaceError::Architecture("missing architecture".into()));
            };
            score *= g.derivation_density(d, c, confidence.unwrap_or(self.architecture_confidence()))?;
        }
        Ok(score)
    }

    /// Rebuilds a configuration from its serialized values and architecture.
    pub fn parse_configuration(&self, values_json: &str, architecture: Option<&str>) -> Result<Configuration, SpaceError> {
        let raw: BTreeMap<String, Value> = serde_json::from_str(values_json)?;
        let mut values = BTreeMap::new();
        for (k, v) in raw {
            let p = self.parameter(&k).ok_or_else(|| SpaceError::UnknownParameter(k.clone()))?;
            let v = match (p.kind, &v) {
                (ParamKind::Float | ParamKind::LogFloat, _) => Value::Float(v.as_f64().ok_or_else(|| SpaceError::OutOfDomain(k.clone()))?),
                (ParamKind::Integer, Value::Float(x)) if x.fract() == 0.0 => Value::Int(*x as i64),
                _ => v,
            };
            values.insert(k, v);
        }
        let architecture = match (self.grammar(), architecture.filter(|s| !s.is_empty())) {
            (Some(g), Some(s)) => Some(g.parse(s)?),
            _ => None,
        };
        let config = Configuration { values, architecture };
        self.validate(&config)?;
        Ok(config)
    }
}
