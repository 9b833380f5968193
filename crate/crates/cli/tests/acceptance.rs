//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails. Timed criteria run sequentially so
//! their wall-clock limits are measured without interference.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use regband::analysis::{fanova_first_order, ParetoReport};
use regband::configspace::{build_space, Configuration, ParameterSpec, SamplingStrategy, SearchSpace, Value};
use regband::grammar::{build_grammar, BlockProfile, DerivationCursor, DerivationSampling, Grammar};
use regband::harness::{dsc, ReplayProblem, SyntheticProblem, SyntheticSpec, VoxelMask};
use regband::moo::{crowding_distance, non_dominated_sort, select_top_k, CostVector};
use regband::prior::Confidence;
use regband::priorband::{run, RunHistory, RunOptions, SamplerWeights};
use regband::scheduler::{budget_ladder, charge_cost, ChargeMode, SamplingTag, Trial, TrialStatus};
use regband::seed;
use regband_cli::run::cmd_run;
use regband_cli::{ProblemSpec, RunManifest};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn spaces() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../spaces")
}

fn jahs() -> SearchSpace {
    SearchSpace::load(&spaces().join("jahs_table3_4.json")).unwrap()
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Fronts by repeated peeling of the points no remaining point dominates.
fn brute_force_fronts(pts: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(pts[j], pts[i])))
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn random_points<R: Rng>(rng: &mut R, n: usize) -> Vec<(f64, f64)> {
    // half the instances use a coarse grid so ties and duplicates occur
    let coarse = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            if coarse {
                (rng.random_range(0..12) as f64, rng.random_range(0..12) as f64)
            } else {
                (rng.random::<f64>(), rng.random::<f64>())
            }
        })
        .collect()
}

fn costs(pts: &[(f64, f64)]) -> Vec<CostVector> {
    pts.iter().map(|&(p, r)| CostVector::new(p, r)).collect()
}

fn c1_non_dominated_sort() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(1);
    for case in 0..1000 {
        let n = rng.random_range(1..=200);
        let pts = random_points(&mut rng, n);
        let got = non_dominated_sort(&costs(&pts)).map_err(|e| e.to_string())?;
        let want = brute_force_fronts(&pts);
        ensure(got == want, || format!("case {case} (n={n}) differs from the brute-force fronts"))?;
    }
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!("1000 instances match, {took:.2?}"))
}

fn c2_promotion_guarantee() -> Outcome {
    let mut rng = seed::rng(2);
    for case in 0..10_000 {
        let n = rng.random_range(1..=60);
        let pts = random_points(&mut rng, n);
        let k = rng.random_range(1..=n);
        let best = (0..n)
            .min_by(|&a, &b| pts[a].0.total_cmp(&pts[b].0).then(pts[a].1.total_cmp(&pts[b].1)).then(a.cmp(&b)))
            .unwrap();
        let chosen = select_top_k(&costs(&pts), k).map_err(|e| e.to_string())?;
        ensure(chosen.len() == k, || format!("case {case}: {} selected, k={k}", chosen.len()))?;
        ensure(chosen.contains(&best), || format!("case {case}: argmin {best} not among top {k}"))?;
    }
    Ok("10000 fuzzed pairs keep the argmin".into())
}

fn c3_crowding_hand_case() -> Outcome {
    let d = crowding_distance(&costs(&[(1.0, 5.0), (2.0, 4.0), (3.0, 3.0)]));
    ensure(d == vec![f64::INFINITY, 2.0, f64::INFINITY], || format!("got {d:?}"))?;
    Ok(format!("{d:?}"))
}

fn c4_weight_schedule() -> Outcome {
    for (r, want) in [(0, 0.5), (1, 0.25), (2, 0.1)] {
        let w = SamplerWeights::scheduled(r, 3);
        ensure(w.p_random == want, || format!("r={r}: p_random {} != {want}", w.p_random))?;
    }
    let n = 10_000;
    let mut worst = 0.0f64;
    let cases = [
        SamplerWeights::scheduled(0, 3),
        SamplerWeights::scheduled(1, 3),
        SamplerWeights::scheduled(2, 3),
        SamplerWeights::with_shares(1, 3, (0.4, 0.6)),
    ];
    for (i, w) in cases.iter().enumerate() {
        let mut rng = seed::rng(40 + i as u64);
        let mut counts: HashMap<SamplingTag, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(w.draw(&mut rng)).or_default() += 1;
        }
        for (tag, p) in [(SamplingTag::Random, w.p_random), (SamplingTag::Prior, w.p_prior), (SamplingTag::Incumbent, w.p_incumbent)]
        {
            let got = counts.get(&tag).copied().unwrap_or(0) as f64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            let dev = (got - n as f64 * p).abs();
            ensure(dev <= 3.0 * sd, || format!("case {i} {tag:?}: {got} draws, expected {} +- {}", n as f64 * p, 3.0 * sd))?;
            if sd > 0.0 {
                worst = worst.max(dev / sd);
            }
        }
    }
    Ok(format!("p_random exact; max deviation {worst:.2} sd over 4x10000 draws"))
}

fn c5_budget_ladder() -> Outcome {
    let l = budget_ladder(10, 1000, 3).map_err(|e| e.to_string())?;
    ensure(l.s_max == 4, || format!("s_max {}", l.s_max))?;
    ensure(l.rung_budgets == vec![12, 37, 111, 333, 1000], || format!("rungs {:?}", l.rung_budgets))?;
    let cont = charge_cost(&l.rung_budgets, ChargeMode::Continuation).map_err(|e| e.to_string())?;
    let restart = charge_cost(&l.rung_budgets, ChargeMode::Restart).map_err(|e| e.to_string())?;
    ensure((cont, restart) == (1000, 1493), || format!("charges {cont} / {restart}"))?;
    Ok(format!("s_max 4, rungs {:?}, continuation {cont}, restart {restart}", l.rung_budgets))
}

fn grammar(n: usize, s: usize) -> Grammar {
    build_grammar(n, s, BlockProfile::standard(n)).unwrap()
}

fn c6_grammar_consistency() -> Outcome {
    let start = Instant::now();
    let mut counts = Vec::new();
    for n in [2, 3, 4] {
        for s in [1, 2] {
            let g = grammar(n, s);
            let mut cursor = DerivationCursor::new(&g);
            let mut walked = 0u128;
            while cursor.current().is_some() {
                walked += 1;
                cursor.advance();
            }
            let analytic = g.count_derivations();
            ensure(walked == analytic, || format!("n={n} S={s}: enumerated {walked}, analytic {analytic}"))?;
            counts.push(format!("({n},{s})={analytic}"));
        }
    }
    let reference = grammar(4, 1).count_derivations();
    ensure(reference == 319_200, || format!("reference profile counts {reference}"))?;
    let g = grammar(4, 1);
    let center = g.default_derivation();
    let mut rng = seed::rng(6);
    for i in 0..1000 {
        let mode = if i % 2 == 0 {
            DerivationSampling::Uniform
        } else {
            DerivationSampling::Prior { center: &center, confidence: Confidence::Low }
        };
        let d = g.sample(&mode, &mut rng);
        let back = g.parse(&d.serialize()).map_err(|e| format!("sample {i}: {e}"))?;
        ensure(back == d, || format!("sample {i} does not round trip"))?;
    }
    let took = within(start, Duration::from_secs(60))?;
    Ok(format!("{}; 1000 round trips; {took:.2?}", counts.join(" ")))
}

fn c7_prior_modality() -> Outcome {
    let g = grammar(4, 1);
    let center = g.default_derivation();
    let mode = DerivationSampling::Prior { center: &center, confidence: Confidence::High };
    let mut rng = seed::rng(7);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..10_000 {
        *counts.entry(g.sample(&mode, &mut rng).serialize()).or_default() += 1;
    }
    let (modal, hits) = counts.iter().max_by_key(|(_, c)| **c).unwrap();
    ensure(*modal == center.serialize(), || format!("modal derivation `{modal}` is not the default"))?;
    Ok(format!("default drawn {hits}/10000 times, {} distinct", counts.len()))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn c8_prior_benefit() -> Outcome {
    let start = Instant::now();
    let full = jahs();
    let space = build_space(full.parameters()[..8].to_vec(), None).map_err(|e| e.to_string())?;
    ensure(space.parameters().len() == 8, || "expected d = 8".into())?;
    let ladder = budget_ladder(10, 1000, 3).unwrap();
    let (mut centered, mut random) = (Vec::new(), Vec::new());
    let (mut centered_sampled, mut random_sampled) = (Vec::new(), Vec::new());
    for s in 0..20u64 {
        let spec = SyntheticSpec { problem_seed: 1000 + s, noise: 0.0, ..Default::default() };
        let problem = SyntheticProblem::new(space.clone(), 1000, spec).map_err(|e| e.to_string())?;
        let opts = RunOptions { seed: s, max_brackets: Some(1), ..Default::default() };
        let at_opt = space.with_prior_center(&problem.optimum_configuration()).map_err(|e| e.to_string())?;
        let elsewhere = space
            .with_prior_center(&space.sample(&SamplingStrategy::Uniform, 5000 + s))
            .map_err(|e| e.to_string())?;
        for (prior_space, out, sampled) in
            [(&at_opt, &mut centered, &mut centered_sampled), (&elsewhere, &mut random, &mut random_sampled)]
        {
            let r = run(prior_space, &problem, &ladder, &opts).map_err(|e| e.to_string())?;
            let inc = r.final_incumbent.ok_or("no incumbent")?;
            out.push(inc.cost.unwrap().primary);
            // best full-budget cost among sampled configurations only
            let best_sampled = r
                .history
                .trials()
                .iter()
                .filter(|t| t.budget == 1000 && t.strategy != SamplingTag::Default)
                .filter_map(|t| t.ok_cost())
                .map(|c| c.primary)
                .fold(f64::INFINITY, f64::min);
            sampled.push(best_sampled);
        }
    }
    let (a, b) = (median(&mut centered), median(&mut random));
    ensure(a < b, || format!("median with prior at optimum {a} is not below random prior {b}"))?;
    let took = within(start, Duration::from_secs(120))?;
    let (sa, sb) = (median(&mut centered_sampled), median(&mut random_sampled));
    Ok(format!(
        "median primary {a:.4} (prior at optimum) < {b:.4} (random prior); sampled configs only {sa:.4} vs {sb:.4}; {took:.2?}"
    ))
}

fn c9_regularized_tradeoff() -> Outcome {
    let space = jahs();
    let ladder = budget_ladder(10, 1000, 3).unwrap();
    let mut fronts = Vec::new();
    for s in 0..5u64 {
        let problem = SyntheticProblem::new(space.clone(), 1000, SyntheticSpec { problem_seed: s, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let opts = RunOptions { seed: s, ..Default::default() };
        let result = run(&space, &problem, &ladder, &opts).map_err(|e| e.to_string())?;
        let again = run(&space, &problem, &ladder, &opts).map_err(|e| e.to_string())?;
        ensure(result == again, || format!("seed {s}: repeated run differs"))?;

        let report: ParetoReport =
            serde_json::from_str(&ParetoReport::from_result(&result).to_json()).map_err(|e| e.to_string())?;
        let pts: Vec<(f64, f64)> = report.front.iter().map(|p| (p.primary, p.runtime_hours)).collect();
        ensure(pts.len() >= 2, || format!("seed {s}: front has {} point(s)", pts.len()))?;
        for (i, a) in pts.iter().enumerate() {
            for (j, b) in pts.iter().enumerate() {
                ensure(i == j || !dominates(*a, *b), || format!("seed {s}: front point {i} dominates {j}"))?;
            }
        }

        let best = result
            .history
            .trials()
            .iter()
            .filter(|t| t.budget == 1000 && t.status == TrialStatus::Ok)
            .min_by(|a, b| {
                let (x, y) = (a.cost.unwrap(), b.cost.unwrap());
                x.primary.total_cmp(&y.primary).then(x.runtime_hours.total_cmp(&y.runtime_hours)).then(a.config_id.cmp(&b.config_id))
            })
            .ok_or("no full-budget trial")?;
        let inc = report.final_incumbent.ok_or("no final incumbent")?;
        ensure(inc.config_id == best.config_id && inc.primary == best.cost.unwrap().primary, || {
            format!("seed {s}: final incumbent {} is not the argmin {}", inc.config_id, best.config_id)
        })?;
        fronts.push(pts.len());
    }
    Ok(format!("front sizes {fronts:?}; final incumbent is the argmin; deterministic"))
}

fn grid_history(f: impl Fn(f64, f64) -> f64) -> (SearchSpace, RunHistory) {
    let space = build_space(
        vec![ParameterSpec::float("x", 0.0, 1.0, 0.5), ParameterSpec::float("y", 0.0, 1.0, 0.5)],
        None,
    )
    .unwrap();
    let mut trials = Vec::new();
    for i in 0..32 {
        for j in 0..32 {
            let (x, y) = ((i as f64 + 0.5) / 32.0, (j as f64 + 0.5) / 32.0);
            let values = BTreeMap::from([("x".to_string(), Value::Float(x)), ("y".to_string(), Value::Float(y))]);
            trials.push(Trial {
                config_id: (i * 32 + j) as u64,
                configuration: Configuration { values, architecture: None },
                bracket: Some(0),
                rung: 0,
                budget: 1000,
                previous_budget: None,
                charged_epochs: 1000,
                cost: Some(CostVector::new(f(x, y), 1.0)),
                status: TrialStatus::Ok,
                strategy: SamplingTag::Random,
                seed: 0,
            });
        }
    }
    (space, RunHistory::from_trials(trials))
}

fn c10_fanova() -> Outcome {
    let (space, h) = grid_history(|x, _| x);
    let r = fanova_first_order(&space, &h, 32, 0).map_err(|e| e.to_string())?;
    let (ix, iy) = (r.importance("x").unwrap(), r.importance("y").unwrap());
    ensure(ix >= 0.9 && iy <= 0.05, || format!("f=x: importance x {ix}, y {iy}"))?;
    let (space, h) = grid_history(|x, y| x + y);
    let r = fanova_first_order(&space, &h, 32, 0).map_err(|e| e.to_string())?;
    let (jx, jy) = (r.importance("x").unwrap(), r.importance("y").unwrap());
    let band = 0.4..=0.6;
    ensure(band.contains(&jx) && band.contains(&jy), || format!("f=x+y: importance x {jx}, y {jy}"))?;
    Ok(format!("f=x: ({ix:.3}, {iy:.3}); f=x+y: ({jx:.3}, {jy:.3})"))
}

fn mask(bits: &[u8]) -> VoxelMask {
    VoxelMask::new(vec![2, bits.len() / 2], bits.iter().map(|&b| b == 1).collect()).unwrap()
}

fn c11_dsc() -> Outcome {
    let a = mask(&[1, 1, 0, 1, 0, 0, 1, 0]);
    let same = dsc(&a, &a).map_err(|e| e.to_string())?;
    let disjoint = dsc(&mask(&[1, 1, 0, 0, 0, 0, 0, 0]), &mask(&[0, 0, 1, 1, 0, 0, 0, 0])).map_err(|e| e.to_string())?;
    // |X| = 4, |Y| = 6, |X ∩ Y| = 3
    let x = mask(&[1, 1, 1, 1, 0, 0, 0, 0]);
    let y = mask(&[0, 1, 1, 1, 1, 1, 1, 0]);
    let partial = dsc(&x, &y).map_err(|e| e.to_string())?;
    ensure((same, disjoint, partial) == (1.0, 0.0, 0.6), || format!("got {same}, {disjoint}, {partial}"))?;
    Ok(format!("identical {same}, disjoint {disjoint}, partial {partial}"))
}

const ARTIFACTS: [&str; 3] = ["history.csv", "pareto.json", "incumbent_trajectory.csv"];

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::copy(spaces().join("hpo_hnas.json"), tmp.path().join("space.json")).map_err(|e| e.to_string())?;
    let manifest = tmp.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"space": "space.json", "problem": {"kind": "synthetic", "spec": {"problem_seed": 12, "noise": 0.05}},
            "seeds": [0, 1], "workers": 4, "out_dir": "out"}"#,
    )
    .map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    let mut snapshots = Vec::new();
    for attempt in 0..2 {
        if out.exists() {
            std::fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        }
        let o = Command::new(env!("CARGO_BIN_EXE_regband"))
            .args(["run", "--manifest"])
            .arg(&manifest)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || format!("run {attempt} failed: {}", String::from_utf8_lossy(&o.stderr)))?;
        let mut files = BTreeMap::new();
        for s in ["seed_0", "seed_1"] {
            for f in ARTIFACTS {
                let p = out.join(s).join(f);
                files.insert(format!("{s}/{f}"), std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?);
            }
        }
        snapshots.push(files);
    }
    for (name, bytes) in &snapshots[0] {
        ensure(snapshots[1][name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", snapshots[0].len()))
}

fn c13_replay_fidelity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = RunManifest {
        space: spaces().join("jahs_table3_4.json"),
        problem: ProblemSpec::Synthetic { spec: SyntheticSpec { problem_seed: 13, noise: 0.02, ..Default::default() } },
        seeds: vec![13],
        out_dir: Some(tmp.path().join("original")),
        ..Default::default()
    };
    let mut sink = Vec::new();
    let original = cmd_run(&base, &mut sink).map_err(|e| e.to_string())?.remove(0);
    let table = tmp.path().join("original/seed_13/replay.csv");
    let replay = ReplayProblem::load(&table).map_err(|e| e.to_string())?;

    let space = jahs();
    let ladder = budget_ladder(base.min_budget, base.max_budget, base.eta).unwrap();
    let direct = run(&space, &replay, &ladder, &original.options).map_err(|e| e.to_string())?;
    ensure(direct == original, || "replayed RunResult differs from the original".into())?;

    let replayed = RunManifest {
        problem: ProblemSpec::Replay { path: table },
        out_dir: Some(tmp.path().join("replayed")),
        ..base
    };
    let via_cli = cmd_run(&replayed, &mut sink).map_err(|e| e.to_string())?.remove(0);
    ensure(via_cli == original, || "replay through the run command differs".into())?;
    for f in ARTIFACTS {
        let a = std::fs::read(tmp.path().join("original/seed_13").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(tmp.path().join("replayed/seed_13").join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{f} differs after replay"))?;
    }
    let ids: BTreeSet<u64> = original.history.trials().iter().map(|t| t.config_id).collect();
    Ok(format!("{} trials over {} configs reproduced exactly", original.history.trials().len(), ids.len()))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("non-dominated sorting matches brute force", c1_non_dominated_sort),
        ("argmin primary is always promoted", c2_promotion_guarantee),
        ("crowding distance hand case", c3_crowding_hand_case),
        ("weight schedule and draw frequencies", c4_weight_schedule),
        ("budget ladder and charging", c5_budget_ladder),
        ("grammar enumeration and round trip", c6_grammar_consistency),
        ("high-confidence prior mode is the default", c7_prior_modality),
        ("prior at the optimum helps", c8_prior_benefit),
        ("regularized trade-off front", c9_regularized_tradeoff),
        ("fANOVA sanity", c10_fanova),
        ("DSC formula", c11_dsc),
        ("run determinism", c12_determinism),
        ("replay fidelity", c13_replay_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
