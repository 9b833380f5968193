use proptest::prelude::*;
use regband::scheduler::{bracket_plan, budget_ladder, charge_cost, ChargeMode, Policy};

/// Walks every configuration of every bracket through its rungs one by one.
fn enumerate_schedule(b_min: u64, b_max: u64, eta: u64) -> (usize, u64, u64) {
    let ladder = budget_ladder(b_min, b_max, eta).unwrap();
    let plan = bracket_plan(&ladder, Policy::StandardHb);
    let (mut configs, mut restart, mut cont) = (0, 0, 0);
    for b in &plan.brackets {
        configs += b.n_configs();
        // a config's chain length is the number of rungs it survives
        for c in 0..b.n_configs() {
            let chain: Vec<u64> = b
                .rung_sizes
                .iter()
                .enumerate()
                .take_while(|(_, &size)| c < size)
                .map(|(j, _)| ladder.rung_budgets[b.start_rung + j])
                .collect();
            restart += charge_cost(&chain, ChargeMode::Restart).unwrap();
            cont += charge_cost(&chain, ChargeMode::Continuation).unwrap();
        }
    }
    (configs, restart, cont)
}

#[test]
fn reference_schedule_totals() {
    let (configs, restart, cont) = enumerate_schedule(10, 1000, 3);
    assert_eq!(configs, 143);
    assert_eq!(restart, 23441);
    let ladder = budget_ladder(10, 1000, 3).unwrap();
    let plan = bracket_plan(&ladder, Policy::StandardHb);
    assert_eq!(plan.total_configs(), configs);
    assert_eq!(plan.restart_epochs(&ladder), restart);
    assert_eq!(plan.epochs(&ladder, ChargeMode::Continuation), cont);
}

proptest! {
    #[test]
    fn ladder_invariants(b_min in 1u64..200, ratio in 2u64..400, eta in 2u64..6) {
        let b_max = b_min * ratio;
        let l = budget_ladder(b_min, b_max, eta).unwrap();
        prop_assert_eq!(*l.rung_budgets.last().unwrap(), b_max);
        prop_assert_eq!(l.rung_budgets.len(), l.s_max + 1);
        prop_assert!(l.rung_budgets.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(b_min * eta.pow(l.s_max as u32) <= b_max);
        prop_assert!(b_min * eta.pow(l.s_max as u32 + 1) > b_max);
        for policy in [Policy::StandardHb, Policy::AsWritten] {
            let plan = bracket_plan(&l, policy);
            prop_assert_eq!(plan.brackets.len(), l.s_max + 1);
            for b in &plan.brackets {
                prop_assert_eq!(b.start_rung + b.rung_sizes.len() - 1, l.s_max);
                prop_assert!(b.rung_sizes.iter().all(|&k| k >= 1));
                prop_assert!(b.rung_sizes.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn continuation_never_exceeds_restart(mut chain in prop::collection::btree_set(1u64..5000, 1..8)) {
        let chain: Vec<u64> = std::mem::take(&mut chain).into_iter().collect();
        let c = charge_cost(&chain, ChargeMode::Continuation).unwrap();
        let r = charge_cost(&chain, ChargeMode::Restart).unwrap();
        prop_assert!(c <= r);
        prop_assert_eq!(c, *chain.last().unwrap());
    }
}
