use serde::Serialize;

use super::AnalysisError;
use crate::configspace::Configuration;
use crate::harness::{SyntheticProblem, SyntheticSpec};

/// Primary cost of each incumbent (column) on each problem (row) at the
/// problem's full budget, without evaluation noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossEvalMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
}

impl CrossEvalMatrix {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("problem").chain(self.columns.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let rec: Vec<String> = std::iter::once(name.clone()).chain(row.iter().map(f64::to_string)).collect();
            w.write_record(&rec).expect("in-memory write");
        }
        let mean: Vec<String> =
            std::iter::once("mean".to_string()).chain(self.column_means.iter().map(f64::to_string)).collect();
        w.write_record(&mean).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn cross_eval(
    problems: &[(String, SyntheticProblem)],
    incumbents: &[(String, Configuration)],
) -> Result<CrossEvalMatrix, AnalysisError> {
    let Some((_, first)) = problems.first() else {
        return Err(AnalysisError::InsufficientData);
    };
    for (name, p) in problems {
        if p.space() != first.space() {
            return Err(AnalysisError::SpaceMismatch(format!("problem `{name}` uses a different space")));
        }
    }
    for (name, c) in incumbents {
        first
            .space()
            .validate(c)
            .map_err(|e| AnalysisError::SpaceMismatch(format!("incumbent `{name}`: {e}")))?;
    }
    let mut cells = Vec::with_capacity(problems.len());
    for (_, p) in problems {
        let quiet = SyntheticProblem::new(p.space().clone(), p.b_max(), SyntheticSpec { noise: 0.0, ..p.spec().clone() })?;
        let row = incumbents
            .iter()
            .map(|(_, c)| Ok(quiet.evaluate_config(c, quiet.b_max(), 0)?.primary))
            .collect::<Result<Vec<f64>, AnalysisError>>()?;
        cells.push(row);
    }
    let column_means = (0..incumbents.len())
        .map(|j| cells.iter().map(|r| r[j]).sum::<f64>() / cells.len() as f64)
        .collect();
    Ok(CrossEvalMatrix {
        rows: problems.iter().map(|(n, _)| n.clone()).collect(),
        columns: incumbents.iter().map(|(n, _)| n.clone()).collect(),
        cells,
        column_means,
    })
}
