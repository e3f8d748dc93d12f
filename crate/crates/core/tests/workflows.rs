mod common;

use std::io::Cursor;

use riesz_lab::constants::{sharp_lp_constant, weak_type_constant};
use riesz_lab::fd_transfer::{
    gaussian_superlevel_area, ratio_convergence_study, weak_type_set_transfer, LevelSpec, SmoothFn,
};
use riesz_lab::martingale_mc::{
    analytic_quadratic_covariation, check_jensen_chain, estimate_representation,
    representation_oracle, WalkConfig,
};
use riesz_lab::norm_probe::{power_iterate_batch, weak_type_lower_bound};
use riesz_lab::spectral_ops::{apply_riesz2, write_multiplier_csv, RieszOperator};
use riesz_lab::zigzag_laminate::{certify_weak_type_lower, search_witness, SearchParams};
use riesz_lab::{GroupSpec, LatticeFunction, RieszCoefficients, C64};

#[test]
fn binary_round_trip_preserves_function() {
    let g = GroupSpec::parse("4,3;8").unwrap();
    let f = LatticeFunction::random(&g, 5);
    let mut buf = Vec::new();
    f.write_binary(&mut buf).unwrap();
    let back = LatticeFunction::read_binary(Cursor::new(buf)).unwrap();
    assert_eq!(back, f);
}

#[test]
fn multiplier_csv_has_one_row_per_mode() {
    let g = GroupSpec::new(vec![4], vec![4]).unwrap();
    let a = RieszCoefficients::identity(1, 1);
    let mut buf = Vec::new();
    write_multiplier_csv(&g, &a, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k1,q1,re,im"));
    assert_eq!(lines.count(), g.len());
}

#[test]
fn batch_probe_matches_operator_norm_at_p2() {
    let g = GroupSpec::discrete(&[6, 5]).unwrap();
    let a = RieszCoefficients::real(&[2.0, -0.5], &[]).unwrap();
    let op = RieszOperator::new(&g, &a).unwrap();
    let jobs: Vec<_> = (0..4)
        .map(|s| (a.clone(), 2.0, LatticeFunction::random(&g, s)))
        .collect();
    for r in power_iterate_batch(&jobs, 200) {
        let r = r.unwrap();
        assert!(r.satisfied);
        assert!(
            (r.bound() - op.l2_norm()).abs() < 1e-6,
            "{} vs {}",
            r.bound(),
            op.l2_norm()
        );
    }
}

#[test]
fn probe_witness_feeds_weak_type_bound() {
    let g = GroupSpec::torus(&[16, 16]).unwrap();
    let a = RieszCoefficients::real(&[], &[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
    let jobs = vec![(a.clone(), 1.5, LatticeFunction::random_real(&g, 3))];
    let w = power_iterate_batch(&jobs, 30).remove(0).unwrap().witness;
    let b = weak_type_lower_bound(&a, 1.5, &w).unwrap();
    assert!(b.bound() > 0.0 && b.bound() <= weak_type_constant(1.5).unwrap());
}

#[test]
fn representation_matches_finite_horizon_oracle() {
    let g = GroupSpec::discrete(&[3, 4]).unwrap();
    let f = LatticeFunction::random_real(&g, 8).mean_zero_project();
    let a = RieszCoefficients::real(&[1.0, 0.25], &[]).unwrap();
    // Short horizon: the finite-T bias is visible but matched by the oracle.
    let config = WalkConfig::new(g.clone(), 0.3, 0.3, 17, 60_000).unwrap();
    let est = estimate_representation(&config, &f, &a, true).unwrap();
    let oracle = representation_oracle(&f, &a, 0.3).unwrap();
    assert!(est.worst_excess(&oracle, 0.0) <= 0.0);
    let limit = apply_riesz2(&a, &f).unwrap();
    assert!(oracle.max_abs_diff(&limit) > 1e-2);
    let long = representation_oracle(&f, &a, 20.0).unwrap();
    assert!(long.max_abs_diff(&limit) < 1e-12);
}

#[test]
fn jensen_chain_on_discrete_group() {
    let g = GroupSpec::discrete(&[4, 3]).unwrap();
    let f = LatticeFunction::random_real(&g, 4).mean_zero_project();
    let a = RieszCoefficients::real(&[0.5, -1.0], &[]).unwrap();
    let config = WalkConfig::new(g.clone(), 3.0, 3.0, 9, 20_000).unwrap();
    let r = check_jensen_chain(&config, &f, &a, 3.0).unwrap();
    assert!(r.holds, "{r:?}");
    let mixed =
        WalkConfig::new(GroupSpec::new(vec![4], vec![8]).unwrap(), 1.0, 0.1, 9, 10).unwrap();
    let h = LatticeFunction::random_real(&mixed.group, 4).mean_zero_project();
    assert!(check_jensen_chain(&mixed, &h, &RieszCoefficients::identity(1, 1), 3.0).is_err());
}

#[test]
fn covariation_is_hermitian() {
    let g = GroupSpec::new(vec![4], vec![4]).unwrap();
    let f = LatticeFunction::random(&g, 1).mean_zero_project();
    let h = LatticeFunction::random(&g, 2).mean_zero_project();
    let config = WalkConfig::new(g, 2.0, 0.1, 1, 1).unwrap();
    let fg = analytic_quadratic_covariation(&config, &f, &h).unwrap();
    let gf = analytic_quadratic_covariation(&config, &h, &f).unwrap();
    assert!((fg - gf.conj()).norm() < 1e-14);
    let ff = analytic_quadratic_covariation(&config, &f, &f).unwrap();
    assert!(ff.re > 0.0 && ff.im.abs() < 1e-14);
}

#[test]
fn search_certificate_recertifies() {
    let params = SearchParams {
        depth: 4,
        ..SearchParams::default()
    };
    let res = search_witness(1.5, &params).unwrap();
    assert_eq!(res.dp_lambda.len(), 4);
    assert!(res.dp_lambda.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    let best = res.best().unwrap();
    let again = certify_weak_type_lower(1.5, &best.tree, params.epsilon).unwrap();
    assert_eq!(again.bound, best.bound);
    assert!(again.bound <= weak_type_constant(1.5).unwrap());
}

#[test]
fn fd_ratios_stay_below_ceiling_for_large_p() {
    let f = SmoothFn::Gaussian { sigma: 1.0 };
    for p in [3.0, 4.0] {
        let s = ratio_convergence_study(&f, 2, 4.0, &[1.0, -1.0], p, &[0.2, 0.1]).unwrap();
        assert!(s.max_ratio() <= sharp_lp_constant(p).unwrap());
    }
}

#[test]
fn fd_set_transfer_converges_to_disk_area() {
    let u = SmoothFn::Gaussian { sigma: 0.8 };
    let s = weak_type_set_transfer(&u, 2, 3.0, LevelSpec::FractionOfMax(0.3), &[0.2, 0.1, 0.05])
        .unwrap();
    let area = gaussian_superlevel_area(0.8, 0.3);
    let gaps: Vec<f64> = s.rows.iter().map(|r| (r.measure - area).abs()).collect();
    assert!(gaps.iter().zip(&s.rows).all(|(g, r)| *g <= r.straddle));
    assert!(s.finest().straddle < s.rows[0].straddle);
}

#[test]
fn complex_shift_commutes_with_transform() {
    let g = GroupSpec::discrete(&[5, 3]).unwrap();
    let f = LatticeFunction::random(&g, 2);
    let a = common::random_alpha(&mut common::rng(1), 2, 0, false);
    let c = C64::new(0.3, -1.2);
    let lhs = apply_riesz2(&a, &f.map(|v| v * c)).unwrap();
    let rhs = apply_riesz2(&a, &f).unwrap().map(|v| v * c);
    assert!(lhs.max_abs_diff(&rhs) < 1e-12);
}
