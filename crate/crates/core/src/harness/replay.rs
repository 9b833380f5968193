//! Tabular replay: objectives looked up from a CSV of earlier evaluations.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalRequest, HarnessError, Objectives, Problem};
use crate::scheduler::Trial;

/// One line of a replay table. `config` is [`Configuration::key`].
///
/// [`Configuration::key`]: crate::configspace::Configuration::key
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub config: String,
    pub budget: u64,
    pub primary: f64,
    pub runtime_hours: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayProblem {
    table: BTreeMap<(String, u64), Objectives>,
}

impl ReplayProblem {
    pub fn from_rows(rows: impl IntoIterator<Item = ReplayRow>) -> Self {
        let table = rows
            .into_iter()
            .map(|r| ((r.config, r.budget), Objectives::new(r.primary, r.runtime_hours)))
            .collect();
        Self { table }
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, HarnessError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<ReplayRow>().enumerate() {
            // line 1 is the header
            let row = rec.map_err(|e| HarnessError::MalformedRow { line: i + 2, reason: e.to_string() })?;
            if !row.primary.is_finite() || !row.runtime_hours.is_finite() {
                return Err(HarnessError::MalformedRow { line: i + 2, reason: "non-finite objective".into() });
            }
            rows.push(row);
        }
        Ok(Self::from_rows(rows))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = std::fs::File::open(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(file)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, key: &str, budget: u64) -> Result<Objectives, HarnessError> {
        self.table
            .get(&(key.to_string(), budget))
            .copied()
            .ok_or_else(|| HarnessError::MissingEntry { key: key.to_string(), budget })
    }
}

impl Problem for ReplayProblem {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<Objectives, HarnessError> {
        self.lookup(&request.config.key(), request.budget)
    }
}

/// Writes the successful trials of a history as a replay table. Failed
/// trials are left out, so replaying them fails again.
pub fn write_replay_table<W: Write>(trials: &[Trial], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["config", "budget", "primary", "runtime_hours"])?;
    for t in trials {
        if let Some(c) = t.ok_cost() {
            w.write_record([
                t.configuration.key(),
                t.budget.to_string(),
                c.primary.to_string(),
                c.runtime_hours.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "config,budget,primary,runtime_hours\n\"{\"\"x\"\":0.5}\",10,0.25,1.5\n";

    #[test]
    fn lookup_and_missing() {
        let p = ReplayProblem::from_reader(TABLE.as_bytes()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.lookup("{\"x\":0.5}", 10).unwrap(), Objectives::new(0.25, 1.5));
        assert!(matches!(p.lookup("{\"x\":0.5}", 30), Err(HarnessError::MissingEntry { .. })));
    }

    #[test]
    fn malformed_rows() {
        let bad = "config,budget,primary,runtime_hours\na,ten,0.1,1\n";
        assert!(matches!(
            ReplayProblem::from_reader(bad.as_bytes()),
            Err(HarnessError::MalformedRow { line: 2, .. })
        ));
        let short = "config,budget,primary,runtime_hours\na,1,0.1\n";
        assert!(ReplayProblem::from_reader(short.as_bytes()).is_err());
    }
}
