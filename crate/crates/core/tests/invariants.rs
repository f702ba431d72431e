mod common;

use common::checks::{self, ks, params_1_or_2};
use common::model_params;
use proptest::prelude::*;
use renewal_ldp::rate::{reduce_dimension, NtSuite};
use renewal_ldp::{Branch, Model, RateSolver, RewardSpec};

proptest! {
    #![proptest_config(common::config(200))]

    #[test]
    fn fenchel_young(p in params_1_or_2(), seed in any::<u64>()) {
        checks::fenchel_young(&p, seed)?;
    }

    #[test]
    fn duality_closure(p in params_1_or_2(), k in ks(2)) {
        checks::duality_closure(&p, &k)?;
    }

    #[test]
    fn gradient_matches_finite_differences(p in params_1_or_2(), k in ks(2)) {
        checks::gradient_matches_finite_differences(&p, &k)?;
    }

    #[test]
    fn hessian_is_positive_semidefinite(p in (1usize..=3).prop_flat_map(model_params), k in ks(3), u in ks(3)) {
        checks::hessian_is_positive_semidefinite(&p, &k, &u)?;
    }

    #[test]
    fn z_and_rate_are_midpoint_convex(p in params_1_or_2(), a in ks(2), b in ks(2)) {
        checks::z_and_rate_are_midpoint_convex(&p, &a, &b)?;
    }

    #[test]
    fn grand_sum_is_log_convex(p in model_params(1), k in -2.0..2.0f64, dk in -1.0..1.0f64, dz in -1.0..1.0f64) {
        checks::grand_sum_is_log_convex(&p, k, dk, dz)?;
    }

    #[test]
    fn zero_set_matches_subdifferential_at_origin(p in model_params(1), t in 0.0..1.0f64) {
        checks::zero_set_matches_subdifferential_at_origin(&p, t)?;
    }
}

#[test]
fn dimension_reduction_identity() {
    // Rank-one rewards (g, 2g) on a model with a power-law tail.
    let w = renewal_ldp::WeightModel::new(
        vec![0.4, 0.3, 0.2],
        Some(renewal_ldp::TailSpec::with_shift(0.5, 2.5, -0.7, 3).unwrap()),
    )
    .unwrap();
    let g = [0.5, 1.5, -0.5];
    let scalar = RewardSpec::scalar(g.to_vec(), 0.3, 0.2, 0.1).unwrap();
    let double = RewardSpec::scalar(g.iter().map(|x| 2.0 * x).collect(), 0.6, 0.4, 0.2).unwrap();
    let m2 = Model::new(w.clone(), RewardSpec::stack(&[&scalar, &double]).unwrap()).unwrap();
    let m1 = Model::new(w, scalar).unwrap();
    let red = reduce_dimension(&m2).unwrap();
    assert_eq!(red.rank, 1);
    let s2 = RateSolver::new(&m2).unwrap();
    let so = RateSolver::new(&red.model).unwrap();
    let s1 = RateSolver::new(&m1).unwrap();
    for i in 0..25 {
        let x = -0.2 + 0.05 * i as f64;
        let w = [x, 2.0 * x];
        let full = s2.rate(&w).unwrap().value;
        let reduced = so.rate(&red.project(&w)).unwrap().value;
        let direct = s1.rate(&[x]).unwrap().value;
        if full.is_finite() {
            assert!((full - reduced).abs() <= 1e-9, "w={x}: {full} vs {reduced}");
            assert!((full - direct).abs() <= 1e-9, "w={x}: {full} vs {direct}");
        } else {
            assert_eq!(reduced, f64::INFINITY);
        }
        // Off the line the rate is infinite.
        assert_eq!(s2.rate(&[x, 2.0 * x + 0.1]).unwrap().value, f64::INFINITY);
    }
}

#[test]
fn degenerate_rewards_concentrate_at_r() {
    let w = renewal_ldp::WeightModel::new(
        vec![0.3, 0.2],
        Some(renewal_ldp::TailSpec::with_shift(0.4, 3.0, -0.5, 2).unwrap()),
    )
    .unwrap();
    let m = Model::new(w, RewardSpec::scalar(vec![0.7, 1.4], 0.7, 0.0, 0.0).unwrap()).unwrap();
    let s = RateSolver::new(&m).unwrap();
    assert_eq!(s.rate(&[0.7]).unwrap().value, 0.0);
    assert_eq!(s.rate(&[0.75]).unwrap().value, f64::INFINITY);
}

#[test]
fn nt_suite_agrees_with_rate_solver() {
    use renewal_ldp::model::presets;
    let cases = [
        presets::geometric(0.0).unwrap(),
        presets::geometric(0.7).unwrap(),
        presets::zeta(2.5, -0.3).unwrap(),
        presets::zeta(2.5, 0.4).unwrap(),
        presets::zeta(1.5, 0.2).unwrap(),
        presets::make_poland_scheraga(0.0, 0.0, 2.2, -0.5, 16).unwrap(),
    ];
    for p in &cases {
        let nt = NtSuite::new(&p.base).unwrap();
        let m = p.counting_model();
        let s = RateSolver::new(&m).unwrap();
        for i in 1..100 {
            let w = i as f64 / 100.0;
            let a = nt.rate(w).unwrap();
            let res = s.rate(&[w]).unwrap();
            if res.value.is_finite() {
                assert!(
                    (a - res.value).abs() <= 1e-9,
                    "{} w={w}: nt {a} vs {} ({:?})",
                    p.kind,
                    res.value,
                    res.branch
                );
            } else {
                assert_eq!(a, f64::INFINITY, "{} w={w}", p.kind);
                assert_eq!(res.branch, Branch::OutsideDomain);
            }
        }
    }
}
