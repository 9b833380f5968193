use proptest::prelude::*;
use regband::moo::{
    area_incumbent, crowding_distance, non_dominated_sort, pareto_front, promotion_order,
    select_top_k, CostVector,
};

fn dominates(a: &CostVector, b: &CostVector) -> bool {
    a.primary <= b.primary
        && a.runtime_hours <= b.runtime_hours
        && (a.primary < b.primary || a.runtime_hours < b.runtime_hours)
}

/// Rank by repeated peeling: front 0 is everything undominated, then remove and repeat.
fn brute_force_fronts(points: &[CostVector]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn cost_vectors(max: usize) -> impl Strategy<Value = Vec<CostVector>> {
    // coarse grid so ties and duplicates show up often
    prop::collection::vec((0u8..8, 0u8..8), 1..max).prop_map(|v| {
        v.into_iter()
            .map(|(a, b)| CostVector::new(a as f64 / 8.0, b as f64 * 1.5))
            .collect()
    })
}

fn wide_vectors(max: usize) -> impl Strategy<Value = Vec<CostVector>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..50.0), 1..max)
        .prop_map(|v| v.into_iter().map(|(a, b)| CostVector::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sort_matches_brute_force_large(points in prop_oneof![cost_vectors(200), wide_vectors(200)]) {
        prop_assert_eq!(non_dominated_sort(&points).unwrap(), brute_force_fronts(&points));
    }

    #[test]
    fn argmin_primary_always_promoted(points in prop_oneof![cost_vectors(40), wide_vectors(40)], k_frac in 0.0f64..1.0) {
        let k = 1 + ((points.len() - 1) as f64 * k_frac) as usize;
        let min = points.iter().map(|p| p.primary).fold(f64::INFINITY, f64::min);
        let top = select_top_k(&points, k).unwrap();
        prop_assert!(top.iter().any(|&i| points[i].primary == min));
    }

    #[test]
    fn selection_is_prefix_monotone(points in cost_vectors(30)) {
        for k in 1..points.len() {
            let a = select_top_k(&points, k).unwrap();
            let b = select_top_k(&points, k + 1).unwrap();
            prop_assert_eq!(&a[..], &b[..k]);
        }
    }

    #[test]
    fn area_incumbent_affine_invariant(
        points in wide_vectors(30),
        sp in 0.1f64..10.0, tp in -5.0f64..5.0, sr in 0.1f64..10.0, tr in -5.0f64..5.0,
    ) {
        let front: Vec<CostVector> = pareto_front(&points).unwrap().into_iter().map(|i| points[i]).collect();
        let moved: Vec<CostVector> =
            front.iter().map(|c| CostVector::new(sp * c.primary + tp, sr * c.runtime_hours + tr)).collect();
        let a = area_incumbent(&front).unwrap();
        let b = area_incumbent(&moved).unwrap();
        // rounding in the rescaled scores may only matter for near-ties
        if a != b {
            let score = |f: &[CostVector], i: usize| {
                let (pl, ph) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), c| (l.min(c.primary), h.max(c.primary)));
                let (rl, rh) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), c| (l.min(c.runtime_hours), h.max(c.runtime_hours)));
                let n = |v: f64, l: f64, h: f64| if h > l { (v - l) / (h - l) } else { 0.0 };
                (1.0 - n(f[i].primary, pl, ph)) * (1.0 - n(f[i].runtime_hours, rl, rh))
            };
            prop_assert!((score(&front, a) - score(&front, b)).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn sort_matches_brute_force(points in cost_vectors(40)) {
        prop_assert_eq!(non_dominated_sort(&points).unwrap(), brute_force_fronts(&points));
    }

    #[test]
    fn fronts_partition_and_order(points in cost_vectors(40)) {
        let fronts = non_dominated_sort(&points).unwrap();
        let mut all: Vec<usize> = fronts.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..points.len()).collect::<Vec<_>>());
        for f in &fronts {
            for &i in f {
                for &j in f {
                    prop_assert!(!dominates(&points[i], &points[j]));
                }
            }
        }
        for w in fronts.windows(2) {
            for &j in &w[1] {
                prop_assert!(w[0].iter().any(|&i| dominates(&points[i], &points[j])));
            }
        }
    }

    #[test]
    fn crowding_boundaries_infinite_interior_finite(points in cost_vectors(20)) {
        let d = crowding_distance(&points);
        prop_assert_eq!(d.len(), points.len());
        for x in &d {
            prop_assert!(*x >= 0.0);
        }
        let lo = points.iter().map(|p| p.primary).fold(f64::INFINITY, f64::min);
        let first_lo = points.iter().position(|p| p.primary == lo).unwrap();
        prop_assert!(d[first_lo].is_infinite());
    }

    #[test]
    fn top_k_is_prefix_and_respects_fronts(points in cost_vectors(30), k_frac in 0.0f64..1.0) {
        let n = points.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let order = promotion_order(&points).unwrap();
        let top = select_top_k(&points, k).unwrap();
        prop_assert_eq!(&top[..], &order[..k]);
        let fronts = non_dominated_sort(&points).unwrap();
        let rank = |i: usize| fronts.iter().position(|f| f.contains(&i)).unwrap();
        for w in order.windows(2) {
            prop_assert!(rank(w[0]) <= rank(w[1]));
        }
    }

    #[test]
    fn area_incumbent_is_on_front_and_undominated(points in cost_vectors(30)) {
        let front_idx = pareto_front(&points).unwrap();
        let front: Vec<CostVector> = front_idx.iter().map(|&i| points[i]).collect();
        let best = area_incumbent(&front).unwrap();
        prop_assert!(best < front.len());
        prop_assert!(!points.iter().any(|p| dominates(p, &front[best])));
    }
}
