use hyperball::geometry::{mobius_into, norm, rho_unchecked, BoundaryPoint};
use hyperball::kernels::KernelTable;
use hyperball::operators::{dts_series, ZonalExpansion};
use hyperball::specialfn::{s_factor, zonal};
use proptest::prelude::*;

fn inside(n: usize, rad: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |v| {
        let s = norm(&v);
        if s <= rad {
            v
        } else {
            v.iter().map(|c| c * rad / s).collect()
        }
    })
}

fn direction(n: usize) -> impl Strategy<Value = BoundaryPoint> {
    prop::collection::vec(-1.0f64..1.0, n)
        .prop_filter("nonzero", |v| norm(v) > 1e-3)
        .prop_map(|v| BoundaryPoint::new(v.iter().map(|c| c / norm(&v)).collect()).unwrap())
}

fn mobius(a: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    mobius_into(a, x, &mut out);
    out
}

proptest! {
    #[test]
    fn mobius_is_an_involution((a, x) in (2usize..6).prop_flat_map(|n| (inside(n, 0.95), inside(n, 0.95)))) {
        let back = mobius(&a, &mobius(&a, &x));
        for (p, q) in back.iter().zip(&x) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_is_a_bounded_invariant_symmetric_distance(
        (a, b, c) in (2usize..6).prop_flat_map(|n| (inside(n, 0.9), inside(n, 0.9), inside(n, 0.9)))
    ) {
        let d = rho_unchecked(&a, &b);
        prop_assert!((0.0..1.0).contains(&d));
        prop_assert_eq!(d, rho_unchecked(&b, &a));
        let moved = rho_unchecked(&mobius(&c, &a), &mobius(&c, &b));
        prop_assert!((moved - d).abs() < 1e-12);
    }

    #[test]
    fn radial_factor_between_one_and_its_center_value(n in 3usize..7, m in 0usize..80, r in 0.0f64..1.0, s in 0.0f64..1.0) {
        let (lo, hi) = if r < s { (r, s) } else { (s, r) };
        let (at_lo, at_hi) = (s_factor(n, m, lo).unwrap(), s_factor(n, m, hi).unwrap());
        prop_assert!(at_hi >= 1.0 - 1e-14);
        prop_assert!(at_hi <= at_lo * (1.0 + 1e-14));
        prop_assert!(at_lo <= s_factor(n, m, 0.0).unwrap() * (1.0 + 1e-14));
    }

    #[test]
    fn zonal_harmonics_are_symmetric((x, y) in (2usize..6).prop_flat_map(|n| (inside(n, 1.0), inside(n, 1.0))), m in 0usize..30) {
        let n = x.len();
        let (a, b) = (zonal(n, m, &x, &y).unwrap(), zonal(n, m, &y, &x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn kernel_is_symmetric((x, y) in (2usize..5).prop_flat_map(|n| (inside(n, 0.9), inside(n, 0.9))), alpha in prop::sample::select(vec![-0.5, 0.0, 1.0, 2.0])) {
        let t = KernelTable::shared(x.len(), alpha, 400).unwrap();
        let (a, b) = (t.eval(&x, &y, 1e-12).unwrap(), t.eval(&y, &x, 1e-12).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn fractional_operators_invert_each_other(eta in direction(3), m in 0usize..20, s in -0.5f64..2.0, t in 0.1f64..2.0, x in inside(3, 0.9)) {
        let f = ZonalExpansion::poisson_term(m, &eta);
        let back = dts_series(&dts_series(&f, s, t).unwrap(), s + t, -t).unwrap();
        let (a, b) = (back.value(&x).unwrap(), f.value(&x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn fractional_operator_composes(eta in direction(3), m in 0usize..20, t1 in 0.1f64..1.5, t2 in 0.1f64..1.5, x in inside(3, 0.9)) {
        let f = ZonalExpansion::poisson_term(m, &eta);
        let two = dts_series(&dts_series(&f, 0.0, t1).unwrap(), t1, t2).unwrap();
        let one = dts_series(&f, 0.0, t1 + t2).unwrap();
        let (a, b) = (two.value(&x).unwrap(), one.value(&x).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
    }
}
