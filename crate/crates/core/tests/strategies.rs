use std::sync::Arc;

use proptest::prelude::*;
use sdgame_core::dynamics::{pathwise_map, BuiltinDynamics, ControlSets, TerminalCost};
use sdgame_core::path_space::{discretize_interval, BrownianPath, ControlPath, TimeGrid};
use sdgame_core::strategies::*;

fn setup() -> (prop::sample::Select<usize>, std::ops::Range<usize>) {
    (prop::sample::select(vec![1usize, 2, 4]), 1usize..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fixed_point_replays_in_either_order((delay, blocks) in setup(), m in 2usize..5, seeds in any::<[u64; 3]>()) {
        let grid = TimeGrid::new(0.0, 1.0, delay * blocks, delay).unwrap();
        let a = table(Side::I, delay, m, seeds[0]).unwrap();
        let b = table(Side::II, delay, m + 1, seeds[1]).unwrap();
        let w = BrownianPath::sample_stream(&grid, 1, seeds[2], 0).unwrap();
        let p = fixed_point(&a, &b, &w).unwrap();
        prop_assert_eq!(&a.apply(&w, &p.v).unwrap(), &p.u);
        prop_assert_eq!(&b.apply(&w, &p.u).unwrap(), &p.v);
        prop_assert_eq!(&fixed_point_ordered(&a, &b, &w, ResolutionOrder::BetaFirst).unwrap(), &p);
        prop_assert!(p.u.indices().iter().all(|&i| i < m));
        prop_assert!(p.v.indices().iter().all(|&i| i <= m));
    }

    #[test]
    fn builtin_strategies_are_delayed((delay, blocks) in setup(), seed in any::<u64>()) {
        let grid = TimeGrid::new(0.0, 1.0, delay * blocks, delay).unwrap();
        for s in [
            constant(Side::I, delay, 3, 2).unwrap(),
            copy_lagged(Side::II, delay, 3, 0, vec![2, 0, 1]).unwrap(),
            table(Side::I, delay, 3, seed).unwrap(),
            noise_switch(Side::II, delay, 3, 0, 2).unwrap(),
        ] {
            let r = verify_delay(&s, &grid, 1, 3, 20, seed);
            prop_assert!(r.passed, "{:?}", r);
        }
    }

    #[test]
    fn pathwise_map_ignores_suffixes((delay, blocks) in setup(), m in 0usize..40, seeds in any::<[u64; 3]>(), player_one in any::<bool>()) {
        let grid = TimeGrid::new(0.0, 1.0, delay * blocks, delay).unwrap();
        let n = grid.n_steps();
        let m = m % (n + 1);
        let u = discretize_interval(-1.0, 1.0, 3).unwrap();
        let sets = ControlSets::new(u.clone(), u);
        let dyn_ = BuiltinDynamics::MeanReverting { state_dim: 1, kappa: 0.7, sigma: 0.5 }.build(TerminalCost::Abs, &sets, 2.0).unwrap();
        let side = if player_one { Side::I } else { Side::II };
        let s = table(side, delay, 3, seeds[0]).unwrap();
        let w1 = BrownianPath::sample_stream(&grid, 1, seeds[1], 0).unwrap();
        let w2 = w1.with_resampled_suffix(m, seeds[2]);
        let o1: Vec<usize> = (0..n).map(|k| (seeds[1] >> (k % 60)) as usize % 3).collect();
        let mut o2 = o1.clone();
        for (k, o) in o2.iter_mut().enumerate().skip(m) {
            *o = (seeds[2] >> (k % 60)) as usize % 3;
        }
        let x1 = pathwise_map(&dyn_, &sets, &[0.3], &s, &ControlPath::new(&grid, o1).unwrap(), &w1).unwrap();
        let x2 = pathwise_map(&dyn_, &sets, &[0.3], &s, &ControlPath::new(&grid, o2).unwrap(), &w2).unwrap();
        // the state at step k reads inputs at steps < k
        for k in 0..=m {
            prop_assert_eq!(x1.state(k), x2.state(k));
        }
    }
}

#[test]
fn feedback_strategy_is_delayed() {
    let u = discretize_interval(-1.0, 1.0, 3).unwrap();
    let sets = ControlSets::new(u.clone(), u);
    let dyn_ = BuiltinDynamics::Separated { state_dim: 1, sigma: 0.3 }.build(TerminalCost::Quadratic, &sets, 2.0).unwrap();
    let policy: Arc<Policy> = Arc::new(|_t, x: &[f64]| if x[0] > 0.0 { 0 } else { 2 });
    for delay in [1, 2, 4] {
        let grid = TimeGrid::new(0.0, 1.0, 16, delay).unwrap();
        let s = make_feedback_strategy(&dyn_, &sets, &[0.1], policy.clone(), Side::I, delay).unwrap();
        let r = verify_delay(&s, &grid, 1, 3, 50, 5);
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn feedback_reads_the_state_one_block_back() {
    // frozen state: the policy sees x0 forever
    let u = discretize_interval(-1.0, 1.0, 3).unwrap();
    let sets = ControlSets::new(u.clone(), u);
    let dyn_ = BuiltinDynamics::Frozen { state_dim: 1 }.build(TerminalCost::Quadratic, &sets, 2.0).unwrap();
    let policy: Arc<Policy> = Arc::new(|_t, x: &[f64]| if x[0] > 0.0 { 0 } else { 2 });
    let grid = TimeGrid::new(0.0, 1.0, 8, 2).unwrap();
    let a = make_feedback_strategy(&dyn_, &sets, &[0.4], policy, Side::I, 2).unwrap();
    let b = constant(Side::II, 2, 3, 1).unwrap();
    let w = BrownianPath::sample_stream(&grid, 1, 1, 0).unwrap();
    assert_eq!(fixed_point(&a, &b, &w).unwrap().u.indices(), &[0; 8]);
}
