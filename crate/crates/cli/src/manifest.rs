//! Run manifests: what to optimize, how, and where to put the results.
//! Manifest files are JSON; relative paths inside them are taken relative
//! to the manifest's own directory.

use std::path::{Path, PathBuf};

use regband::harness::SyntheticSpec;
use regband::priorband::Mode;
use regband::scheduler::{ChargeMode, Policy};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "REGBAND_OUT";
pub const RESOLVED_NAME: &str = "manifest.resolved.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
    },
    Replay {
        path: PathBuf,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_timeout() -> f64 {
    3600.0
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Synthetic { spec: SyntheticSpec::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Synthetic,
    Replay,
    External,
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(ProblemKind::Synthetic),
            "replay" => Ok(ProblemKind::Replay),
            "external" => Ok(ProblemKind::External),
            other => Err(format!("unknown problem kind `{other}` (expected synthetic, replay or external)")),
        }
    }
}

impl ProblemSpec {
    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemSpec::Synthetic { .. } => ProblemKind::Synthetic,
            ProblemSpec::Replay { .. } => ProblemKind::Replay,
            ProblemSpec::External { .. } => ProblemKind::External,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub space: PathBuf,
    pub problem: ProblemSpec,
    pub mode: Mode,
    pub eta: u64,
    pub min_budget: u64,
    pub max_budget: u64,
    pub policy: Policy,
    pub charge: ChargeMode,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub max_brackets: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Also write `importance.json` for every seed.
    pub importance: bool,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            space: PathBuf::new(),
            problem: ProblemSpec::default(),
            mode: Mode::default(),
            eta: 3,
            min_budget: 10,
            max_budget: 1000,
            policy: Policy::default(),
            charge: ChargeMode::default(),
            seeds: vec![0],
            workers: 1,
            max_brackets: None,
            out_dir: None,
            importance: false,
        }
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::Validation(format!("manifest file `{}` does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        let mut m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("malformed manifest `{}`: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.space = rebase(base, &m.space);
        if let ProblemSpec::Replay { path } = &mut m.problem {
            *path = rebase(base, path);
        }
        if let Some(out) = &mut m.out_dir {
            *out = rebase(base, out);
        }
        Ok(m)
    }

    /// Output root: the manifest's own value, then the environment, then
    /// `results`.
    pub fn output_root(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.space.as_os_str().is_empty() {
            return Err(CliError::Validation("no space file given".into()));
        }
        if !self.space.is_file() {
            return Err(CliError::Validation(format!("space file `{}` does not exist", self.space.display())));
        }
        match &self.problem {
            ProblemSpec::Replay { path } if !path.is_file() => {
                return Err(CliError::Validation(format!("replay table `{}` does not exist", path.display())));
            }
            ProblemSpec::External { command, .. } if command.is_empty() => {
                return Err(CliError::Validation("external problem needs an evaluator command".into()));
            }
            ProblemSpec::External { timeout_secs, .. } if !(timeout_secs.is_finite() && *timeout_secs > 0.0) => {
                return Err(CliError::Validation(format!("timeout must be positive, got {timeout_secs}")));
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return Err(CliError::Validation("no seeds given".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Validation("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Copy with every path made absolute, as written next to the results.
    pub fn resolved(&self, out_dir: &Path) -> Result<Self, CliError> {
        let abs = |p: &Path| std::path::absolute(p).map_err(|source| CliError::io(p, source));
        let mut m = self.clone();
        m.space = abs(&self.space)?;
        if let ProblemSpec::Replay { path } = &mut m.problem {
            *path = abs(path)?;
        }
        m.out_dir = Some(abs(out_dir)?);
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Seeds as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl std::str::FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_seeds(s).map(SeedList)
    }
}

/// Parses `7`, a comma list `1,2,5` or a half-open range `0..20`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("invalid seed `{s}`"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if b <= a {
            return Err(format!("empty seed range `{text}`"));
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(num).collect()
}
