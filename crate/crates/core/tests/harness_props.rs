use proptest::prelude::*;
use regband::configspace::{build_space, Configuration, ParameterSpec, SearchSpace, Value};
use regband::harness::{dsc, SyntheticProblem, SyntheticSpec, VoxelMask};

fn specs() -> Vec<ParameterSpec> {
    vec![
        ParameterSpec::float("a", 0.0, 1.0, 0.5),
        ParameterSpec::float("b", -2.0, 2.0, 0.0),
        ParameterSpec::log_float("c", 1e-4, 1.0, 1e-2),
        ParameterSpec::integer("model_scale", 1, 8, 2),
        ParameterSpec::categorical("d", &["p", "q", "r"], "p"),
    ]
}

fn problem(space: SearchSpace) -> SyntheticProblem {
    let spec = SyntheticSpec { problem_seed: 9, weights: [("b".to_string(), 3.0)].into(), ..Default::default() };
    SyntheticProblem::new(space, 500, spec).unwrap()
}

fn config(space: &SearchSpace, u: &[f64]) -> Configuration {
    Configuration { values: space.denormalize(u), architecture: None }
}

proptest! {
    #[test]
    fn declaration_order_does_not_matter(u in prop::collection::vec(0.0f64..=1.0, 5), budget in 1u64..=500) {
        let s1 = build_space(specs(), None).unwrap();
        let mut rev = specs();
        rev.reverse();
        let s2 = build_space(rev, None).unwrap();
        let c = config(&s1, &u);
        let o1 = problem(s1).evaluate_config(&c, budget, 0).unwrap();
        let o2 = problem(s2).evaluate_config(&c, budget, 0).unwrap();
        prop_assert_eq!(o1, o2);
    }

    #[test]
    fn primary_non_increasing_in_budget(u in prop::collection::vec(0.0f64..=1.0, 5)) {
        let s = build_space(specs(), None).unwrap();
        let c = config(&s, &u);
        let p = problem(s);
        let mut prev = f64::INFINITY;
        for k in 1..=100 {
            let b = k * 5;
            let o = p.evaluate_config(&c, b, 0).unwrap();
            prop_assert!(o.primary <= prev);
            prop_assert!((0.0..=1.0).contains(&o.primary));
            prev = o.primary;
        }
        let half = p.evaluate_config(&c, 100, 0).unwrap();
        let full = p.evaluate_config(&c, 200, 0).unwrap();
        prop_assert_eq!(full.runtime_hours, 2.0 * half.runtime_hours);
    }

    #[test]
    fn dsc_symmetric_and_bounded(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
        let n = bits.len();
        let x = VoxelMask::new(vec![n], bits.iter().map(|b| b.0).collect()).unwrap();
        let y = VoxelMask::new(vec![n], bits.iter().map(|b| b.1).collect()).unwrap();
        let d = dsc(&x, &y).unwrap();
        prop_assert_eq!(d, dsc(&y, &x).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
    }
}

#[test]
fn unimodal_along_each_axis() {
    let s = build_space(
        vec![ParameterSpec::float("a", 0.0, 1.0, 0.5), ParameterSpec::float("b", -2.0, 2.0, 0.0)],
        None,
    )
    .unwrap();
    let p = problem(s.clone());
    let opt = p.optimum();
    for (axis, name) in ["a", "b"].iter().enumerate() {
        let vals: Vec<f64> = (0..=100)
            .map(|i| {
                let mut u = vec![opt["a"], opt["b"]];
                u[axis] = i as f64 / 100.0;
                p.evaluate_config(&config(&s, &u), 500, 0).unwrap().primary
            })
            .collect();
        let argmin = (0..vals.len()).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
        assert!(vals[..=argmin].windows(2).all(|w| w[1] <= w[0]), "{name}");
        assert!(vals[argmin..].windows(2).all(|w| w[1] >= w[0]), "{name}");
        assert!((argmin as f64 / 100.0 - opt[*name]).abs() <= 0.005 + 1e-12, "{name}");
    }
    let best = p.optimum_configuration();
    assert_eq!(p.evaluate_config(&best, 500, 0).unwrap().primary, 0.0);
    assert!(best.values.get("a").is_some_and(|v| matches!(v, Value::Float(_))));
}
