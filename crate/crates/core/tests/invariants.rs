//! Property tests for algebraic, kernel and operator invariants.

use approx::assert_relative_eq;
use cliffpi::clifford::{pq_split, Involution, Multivector, Paravector, MAX_N};
use cliffpi::fields::FieldSample;
use cliffpi::geometry::{default_grid, ManifoldSpec};
use cliffpi::kernels::{cot_cylinder, g_euclid};
use cliffpi::operators::Discretization;
use proptest::prelude::*;

fn multivector(n: usize) -> impl Strategy<Value = Multivector> {
    prop::collection::vec(-2.0..2.0f64, 1 << n).prop_map(move |c| Multivector::new(n, c).unwrap())
}

fn paravector(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Paravector> {
    prop::collection::vec(lo..hi, n + 1).prop_map(Paravector)
}

fn dim_and_triple() -> impl Strategy<Value = (Multivector, Multivector, Multivector)> {
    (1..=MAX_N).prop_flat_map(|n| (multivector(n), multivector(n), multivector(n)))
}

proptest! {
    #[test]
    fn product_is_associative((a, b, c) in dim_and_triple()) {
        let l = &(&a * &b) * &c;
        let r = &a * &(&b * &c);
        prop_assert!(l.max_abs_diff(&r) <= 1e-12 * (1.0 + l.norm()));
    }

    #[test]
    fn product_distributes((a, b, c) in dim_and_triple()) {
        let l = &a * &(&b + &c);
        let r = &(&a * &b) + &(&a * &c);
        prop_assert!(l.max_abs_diff(&r) <= 1e-12 * (1.0 + l.norm()));
    }

    #[test]
    fn involutions_are_involutive((a, _, _) in dim_and_triple()) {
        for kind in Involution::ALL {
            prop_assert!(a.involution(kind).involution(kind).max_abs_diff(&a) == 0.0);
        }
    }

    #[test]
    fn reversion_reverses_products((a, b, _) in dim_and_triple()) {
        let l = (&a * &b).involution(Involution::Reversion);
        let r = &b.involution(Involution::Reversion) * &a.involution(Involution::Reversion);
        prop_assert!(l.max_abs_diff(&r) <= 1e-12 * (1.0 + l.norm()));
    }

    #[test]
    fn pq_split_preserves_norm((a, _, _) in dim_and_triple()) {
        let (p, q, _) = pq_split(&a);
        prop_assert!((p.norm2() + q.norm2() - a.norm2()).abs() <= 1e-12 * (1.0 + a.norm2()));
        let en = Multivector::e(a.n(), a.n());
        let rebuilt = &p + &(&q * &en);
        prop_assert!(rebuilt.max_abs_diff(&a) <= 1e-12);
    }

    #[test]
    fn paravector_times_bar_is_norm_squared(n in 1..=MAX_N, seed in prop::collection::vec(-3.0..3.0f64, MAX_N + 1)) {
        let x = Paravector(seed[..=n].to_vec());
        let prod = &x.embed() * &x.bar().embed();
        let expect = Multivector::scalar(n, x.norm2());
        prop_assert!(prod.max_abs_diff(&expect) <= 1e-12 * (1.0 + x.norm2()));
        if x.norm2() > 1e-6 {
            let inv = x.invert().unwrap();
            let one = &x.embed() * &inv;
            prop_assert!(one.max_abs_diff(&Multivector::scalar(n, 1.0)) <= 1e-12);
        }
    }

    #[test]
    fn euclid_kernel_is_odd(x in paravector(2, -1.0, 1.0), y in paravector(2, -1.0, 1.0)) {
        prop_assume!(x.sub(&y).norm() > 1e-3);
        let a = g_euclid(&x, &y).unwrap().value;
        let b = g_euclid(&y, &x).unwrap().value;
        prop_assert!((&a + &b).norm() <= 1e-12 * a.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cylinder_kernel_is_quasi_periodic(
        x in paravector(3, 0.1, 0.9),
        y in paravector(3, 0.1, 0.9),
        bundle in 0usize..=1,
    ) {
        prop_assume!(x.sub(&y).norm() > 0.05);
        let spec = ManifoldSpec::cylinder(3, 1, bundle);
        let k0 = cot_cylinder(&x, &y, &spec).unwrap();
        let mut shifted = x.clone();
        shifted.0[0] += 1.0;
        let k1 = cot_cylinder(&shifted, &y, &spec).unwrap();
        let sign = if bundle == 1 { -1.0 } else { 1.0 };
        let gap = (&k1.value - &(&k0.value * sign)).norm();
        prop_assert!(gap <= 2.0 * (k0.truncation_error + k1.truncation_error), "gap {gap:e}");
    }
}

fn random_field(n: usize, cells: usize, seed: &[f64]) -> FieldSample {
    let dim = 1 << n;
    let values = (0..cells * dim).map(|i| seed[i % seed.len()] * ((i as f64) * 0.37).sin()).collect();
    FieldSample::from_values(n, values)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pi_is_linear_and_transpose_is_adjoint(
        seed_f in prop::collection::vec(-1.0..1.0f64, 7),
        seed_g in prop::collection::vec(-1.0..1.0f64, 5),
        alpha in -2.0..2.0f64,
    ) {
        let grid = default_grid(&ManifoldSpec::euclid(1), 8).unwrap();
        let disc = Discretization::new(&grid);
        let f = random_field(1, grid.len(), &seed_f);
        let g = random_field(1, grid.len(), &seed_g);
        let lhs = disc.pi(&f.axpy(alpha, &g)).unwrap();
        let rhs = disc.pi(&f).unwrap().axpy(alpha, &disc.pi(&g).unwrap());
        prop_assert!(disc.norm(&lhs.axpy(-1.0, &rhs)) <= 1e-12 * (1.0 + disc.norm(&lhs)));
        let a = disc.dot(&disc.pi(&f).unwrap(), &g);
        let b = disc.dot(&f, &disc.pi_transpose(&g).unwrap());
        assert_relative_eq!(a, b, epsilon = 1e-10 * (1.0 + disc.norm(&f) * disc.norm(&g)));
    }
}
