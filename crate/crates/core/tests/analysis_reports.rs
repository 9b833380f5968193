use std::path::Path;

use proptest::prelude::*;
use regband::analysis::{
    cross_eval, export_reports, fanova_first_order, fanova_first_order_data, forest::FeatureKind,
    forest::ForestConfig, read_history_csv, ParetoReport,
};
use regband::configspace::SearchSpace;
use regband::harness::{SyntheticProblem, SyntheticSpec};
use regband::moo::CostVector;
use regband::priorband::{run, RunOptions};
use regband::scheduler::budget_ladder;

fn load_space(name: &str) -> SearchSpace {
    SearchSpace::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../spaces").join(name)).unwrap()
}

fn problem(space: &SearchSpace, seed: u64) -> SyntheticProblem {
    SyntheticProblem::new(space.clone(), 1000, SyntheticSpec { problem_seed: seed, ..Default::default() }).unwrap()
}

#[test]
fn exports_are_byte_stable_and_consistent() {
    let space = load_space("jahs_table3_4.json");
    let p = problem(&space, 4);
    let ladder = budget_ladder(10, 1000, 3).unwrap();
    let opts = RunOptions { seed: 2, ..Default::default() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let result = run(&space, &p, &ladder, &opts).unwrap();
        let imp = fanova_first_order(&space, &result.history, 8, 0).unwrap();
        export_reports(&result, d.path(), Some(&imp)).unwrap();
    }
    for f in ["history.csv", "pareto.json", "incumbent_trajectory.csv", "replay.csv", "importance.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }

    let traj = std::fs::read_to_string(dirs[0].path().join("incumbent_trajectory.csv")).unwrap();
    let primaries: Vec<f64> = traj.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!primaries.is_empty());
    assert!(primaries.windows(2).all(|w| w[1] <= w[0]));

    let report: ParetoReport =
        serde_json::from_str(&std::fs::read_to_string(dirs[0].path().join("pareto.json")).unwrap()).unwrap();
    let pts: Vec<CostVector> = report.front.iter().map(|p| CostVector::new(p.primary, p.runtime_hours)).collect();
    for a in &pts {
        assert!(!pts.iter().any(|b| b.dominates(a)));
    }

    // the CSV round trip restores the full history
    let result = run(&space, &p, &ladder, &opts).unwrap();
    let text = std::fs::read(dirs[0].path().join("history.csv")).unwrap();
    let (history, seed) = read_history_csv(&space, text.as_slice()).unwrap();
    assert_eq!(seed, 2);
    assert_eq!(history, result.history);
    assert_eq!(ParetoReport::from_history(&history, 1000), report);
}

#[test]
fn grammar_space_history_roundtrip() {
    let space = load_space("hpo_hnas.json");
    let p = problem(&space, 1);
    let ladder = budget_ladder(10, 1000, 3).unwrap();
    let result = run(&space, &p, &ladder, &RunOptions { max_brackets: Some(2), ..Default::default() }).unwrap();
    assert!(result.history.trials().iter().all(|t| t.configuration.architecture.is_some()));
    let csv = regband::analysis::history_csv(&result.history, 0);
    let (history, _) = read_history_csv(&space, csv.as_bytes()).unwrap();
    assert_eq!(history, result.history);
}

#[test]
fn cross_eval_examples() {
    let space = load_space("jahs_table3_4.json");
    let problems: Vec<(String, SyntheticProblem)> =
        (0..3).map(|s| (format!("p{s}"), problem(&space, 100 + s))).collect();
    let incumbents: Vec<_> = problems.iter().map(|(n, p)| (n.clone(), p.optimum_configuration())).collect();
    let m = cross_eval(&problems, &incumbents).unwrap();
    assert_eq!(m.cells.len(), 3);
    for i in 0..3 {
        for j in 0..3 {
            assert!(m.cells[i][i] <= m.cells[i][j]);
        }
        // each problem's own optimum is exact
        assert_eq!(m.cells[i][i], 0.0);
    }
    let mean0 = (m.cells[0][0] + m.cells[1][0] + m.cells[2][0]) / 3.0;
    assert_eq!(m.column_means[0], mean0);
    assert_eq!(m.to_csv().lines().count(), 5);

    let one = cross_eval(&problems[..1], &incumbents[..1]).unwrap();
    assert_eq!(one.cells, vec![vec![0.0]]);

    // diagonal equals the run's own incumbent cost at full budget
    let ladder = budget_ladder(10, 1000, 3).unwrap();
    let result = run(&space, &problems[0].1, &ladder, &RunOptions::default()).unwrap();
    let inc = result.final_incumbent.clone().unwrap();
    let m = cross_eval(&problems[..1], &[("run".into(), inc.configuration.clone())]).unwrap();
    assert_eq!(m.cells[0][0], inc.cost.unwrap().primary);

    // reordering permutes rows and columns only
    let rev_p: Vec<_> = problems.iter().rev().cloned().collect();
    let rev_i: Vec<_> = incumbents.iter().rev().cloned().collect();
    let r = cross_eval(&rev_p, &rev_i).unwrap();
    let full = cross_eval(&problems, &incumbents).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(r.cells[2 - i][2 - j], full.cells[i][j]);
        }
    }

    let other = load_space("hpo_hnas.json");
    let mixed = vec![problems[0].clone(), ("h".to_string(), problem(&other, 0))];
    assert!(matches!(
        cross_eval(&mixed, &incumbents[..1]),
        Err(regband::analysis::AnalysisError::SpaceMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn importance_sums_and_affine_invariance(
        a in 0.1f64..3.0, b in -2.0f64..2.0, wx in 0.0f64..2.0, wy in 0.0f64..2.0, wz in 0.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..4 {
                    let p = [(i as f64 + 0.5) / 8.0, (j as f64 + 0.5) / 8.0, k as f64];
                    x.push(p.to_vec());
                    y.push(wx * p[0] * p[0] + wy * (p[1] - 0.3).abs() + wz * [0.0, 1.0, 0.2, 0.7][k]);
                }
            }
        }
        let kinds = [FeatureKind::Continuous, FeatureKind::Continuous, FeatureKind::Categorical(4)];
        let names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let cfg = ForestConfig { trees: 8, seed, ..Default::default() };
        let r = fanova_first_order_data(&x, &y, &kinds, &names, &cfg).unwrap();
        let sum: f64 = r.parameters.values().map(|e| e.importance).sum();
        prop_assert!(sum <= 1.0 + 1e-9);
        prop_assert!(r.parameters.values().all(|e| e.importance >= 0.0));
        let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let s = fanova_first_order_data(&x, &scaled, &kinds, &names, &cfg).unwrap();
        for n in &names {
            prop_assert!((r.importance(n).unwrap() - s.importance(n).unwrap()).abs() <= 0.05);
        }
    }
}
