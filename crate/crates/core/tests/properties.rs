mod common;

use proptest::prelude::*;
use riesz_lab::constants::{
    conjugate, sharp_lp_constant, weak_type_constant, weak_type_constant_via_scaling, young_phi,
    young_psi,
};
use riesz_lab::fd_transfer::{fd_riesz2, second_diff, FDField, FDGrid};
use riesz_lab::norm_probe::{lp_ratio, weak_type_lower_bound};
use riesz_lab::spectral_ops::{
    apply_riesz2, inverse_transform, multiplier_table, transform, RieszOperator,
};
use riesz_lab::zigzag_laminate::{from_signed_transform, random_tree, ZigzagTree};
use riesz_lab::{GroupSpec, LatticeFunction, RieszCoefficients, C64};

fn group() -> impl Strategy<Value = GroupSpec> {
    (
        prop::collection::vec(2usize..6, 0..3),
        prop::collection::vec(prop::sample::select(vec![4usize, 8]), 0..2),
    )
        .prop_filter("nontrivial", |(d, t)| !d.is_empty() || !t.is_empty())
        .prop_map(|(d, t)| GroupSpec::new(d, t).unwrap())
}

fn case() -> impl Strategy<Value = (GroupSpec, RieszCoefficients, LatticeFunction)> {
    (group(), any::<u64>(), any::<bool>()).prop_map(|(g, seed, real)| {
        let mut r = common::rng(seed);
        let a = common::random_alpha(&mut r, g.m(), g.n(), real);
        let f = common::random_function(&mut r, &g);
        (g, a, f)
    })
}

fn exponent() -> impl Strategy<Value = f64> {
    1.05f64..6.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_round_trip((_, _, f) in case()) {
        let back = inverse_transform(&transform(&f).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&f) < 1e-12 * (1.0 + f.sup_norm()));
    }

    #[test]
    fn multiplier_bounded_by_matrix_norm((g, a, _) in case()) {
        let t = multiplier_table(&g, &a).unwrap();
        prop_assert_eq!(t[0], C64::new(0.0, 0.0));
        let n = a.matrix_norm();
        prop_assert!(t.iter().all(|m| m.norm() <= n * (1.0 + 1e-12) + 1e-15));
    }

    #[test]
    fn transform_is_linear_in_alpha((g, a, f) in case(), seed in any::<u64>()) {
        let b = common::random_alpha(&mut common::rng(seed), g.m(), g.n(), false);
        let sum = RieszCoefficients::new(
            a.alpha_x.iter().zip(&b.alpha_x).map(|(x, y)| x + y).collect(),
            a.alpha_y.iter().zip(&b.alpha_y)
                .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
                .collect(),
        ).unwrap();
        let lhs = apply_riesz2(&sum, &f).unwrap();
        let rhs = apply_riesz2(&a, &f).unwrap().add(&apply_riesz2(&b, &f).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10 * (1.0 + f.sup_norm() * (a.matrix_norm() + b.matrix_norm())));
    }

    #[test]
    fn output_has_zero_mean_and_ignores_constants((g, a, f) in case(), c in -3.0f64..3.0) {
        let u = apply_riesz2(&a, &f).unwrap();
        prop_assert!(u.mean().norm() < 1e-12 * (1.0 + u.sup_norm()));
        let shifted = f.add(&LatticeFunction::constant(&g, C64::new(c, 0.0))).unwrap();
        let v = apply_riesz2(&a, &shifted).unwrap();
        prop_assert!(u.max_abs_diff(&v) < 1e-10 * (1.0 + f.sup_norm() + c.abs()) * (1.0 + a.matrix_norm()));
    }

    #[test]
    fn adjoint_pairing((g, a, f) in case(), seed in any::<u64>()) {
        let h = common::random_function(&mut common::rng(seed), &g);
        let op = RieszOperator::new(&g, &a).unwrap();
        let lhs = op.apply(&f).unwrap().inner_product(&h).unwrap();
        let rhs = f.inner_product(&op.apply_adjoint(&h).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn lp_ratio_below_ceiling((_, a, f) in case(), p in exponent()) {
        let cap = a.matrix_norm() * sharp_lp_constant(p).unwrap();
        prop_assert!(lp_ratio(&a, p, &f).unwrap() <= cap * (1.0 + 1e-9));
    }

    #[test]
    fn weak_type_bound_below_ceiling((_, a, f) in case(), p in exponent()) {
        let r = weak_type_lower_bound(&a, p, &f).unwrap();
        prop_assert!(r.bound() <= weak_type_constant(p).unwrap() * a.matrix_norm() * (1.0 + 1e-9));
        prop_assert!(r.bound_sequence.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn sharp_constant_is_conjugation_invariant(p in exponent()) {
        let q = conjugate(p).unwrap();
        prop_assert!((sharp_lp_constant(p).unwrap() - sharp_lp_constant(q).unwrap()).abs() < 1e-12 * sharp_lp_constant(p).unwrap());
    }

    #[test]
    fn weak_type_scaling_reproduces_constant(p in exponent()) {
        let c = weak_type_constant(p).unwrap();
        prop_assert!((weak_type_constant_via_scaling(p).unwrap() - c).abs() < 1e-12 * c);
    }

    #[test]
    fn young_inequality(s in 0.0f64..20.0, t in 0.0f64..20.0) {
        // Φ and Ψ are complementary.
        prop_assert!(young_phi(s).unwrap() + young_psi(t).unwrap() >= s * t - 1e-9 * (1.0 + s * t));
    }

    #[test]
    fn zigzag_round_trip(seed in any::<u64>(), depth in 0usize..7) {
        let t = random_tree(seed, depth);
        prop_assert_eq!(&from_signed_transform(&t.to_transform_pair()).unwrap(), &t);
        prop_assert_eq!(&ZigzagTree::from_json(&t.to_json().unwrap()).unwrap(), &t);
        let lam = t.laminate().normalized();
        prop_assert!((lam.total_weight() - 1.0).abs() < 1e-12);
        let b = lam.barycenter();
        prop_assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
    }

    #[test]
    fn fd_second_diff_kills_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let g = FDGrid::new(0.25, 2, 2.0).unwrap();
        let f = FDField::sample(g, |x| a * x[0] + b * x[1] + c);
        let mask = g.box_mask();
        for axis in 0..2 {
            let d = second_diff(&f, axis).unwrap();
            prop_assert!(d.values().iter().zip(&mask).filter(|(_, &m)| m).all(|(v, _)| v.abs() < 1e-9));
        }
    }

    #[test]
    fn fd_axis_transforms_sum_to_minus_identity(seed in any::<u64>()) {
        let g = FDGrid::new(0.5, 2, 2.0).unwrap();
        let mut r = common::rng(seed);
        let vals: Vec<f64> = (0..g.len()).map(|_| common::normal_c(&mut r).re).collect();
        let f = FDField::new(g, vals).unwrap().restrict_to_box();
        let mean = f.mean();
        let u0 = fd_riesz2(&f, 0).unwrap();
        let u1 = fd_riesz2(&f, 1).unwrap();
        let mask = g.box_mask();
        for k in 0..g.len() {
            if mask[k] {
                prop_assert!((u0.values()[k] + u1.values()[k] + f.values()[k] - mean).abs() < 1e-10);
            }
        }
    }
}
