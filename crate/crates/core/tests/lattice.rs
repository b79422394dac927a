use hyperball::cli::suites::{brute_index, measure_ratio_bounds, union_measure};
use hyperball::geometry::{norm_sq, rho_unchecked, Point};
use hyperball::lattice::{build_lattice, lattice_from_text, lattice_to_text, partition_index, uniform_in_ball, Partition};
use hyperball::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn separated_and_covering() {
    let l = build_lattice(3, 0.25, 0.85, 7).unwrap();
    for m in 0..l.len() {
        for k in 0..m {
            assert!(rho_unchecked(l.center(m), l.center(k)) >= l.r);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5000 {
        let x = uniform_in_ball(&mut rng, 3, 0.85);
        let d = (0..l.len()).map(|m| rho_unchecked(&x, l.center(m))).fold(1.0, f64::min);
        assert!(d < l.r, "uncovered point at distance {d}");
    }
}

#[test]
fn centers_sorted_by_radius() {
    let l = build_lattice(2, 0.2, 0.9, 1).unwrap();
    for m in 1..l.len() {
        assert!(norm_sq(l.center(m - 1)) <= norm_sq(l.center(m)));
    }
}

#[test]
fn same_seed_same_lattice() {
    let a = build_lattice(3, 0.3, 0.8, 11).unwrap();
    let b = build_lattice(3, 0.3, 0.8, 11).unwrap();
    let c = build_lattice(3, 0.3, 0.8, 12).unwrap();
    assert_eq!(a.centers(), b.centers());
    assert_ne!(a.centers(), c.centers());
}

#[test]
fn text_round_trip() {
    let l = build_lattice(3, 0.3, 0.8, 5).unwrap();
    let back = lattice_from_text(&lattice_to_text(&l)).unwrap();
    assert_eq!(back.centers(), l.centers());
    assert_eq!((back.n, back.r, back.r_max, back.seed), (l.n, l.r, l.r_max, l.seed));
    assert!(lattice_from_text("not a lattice").is_err());
}

#[test]
fn rejects_bad_parameters() {
    assert!(matches!(build_lattice(3, 0.5, 0.9, 1), Err(Error::Input(_))));
    assert!(matches!(build_lattice(3, 0.0, 0.9, 1), Err(Error::Input(_))));
    assert!(matches!(build_lattice(3, 0.2, 1.0, 1), Err(Error::Input(_))));
}

#[test]
fn partition_follows_recursive_rule() {
    let l = Arc::new(build_lattice(3, 0.2, 0.8, 2).unwrap());
    let p = Partition::new(l.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3000 {
        let x = uniform_in_ball(&mut rng, 3, 0.8);
        let m = p.index(&x).unwrap();
        assert_eq!(Some(m), brute_index(&l, &x));
        assert!(rho_unchecked(&x, l.center(m)) < l.r);
        assert_eq!(partition_index(&p, &Point::new(x).unwrap()).unwrap(), m);
    }
}

#[test]
fn centers_belong_to_their_own_cell() {
    let l = Arc::new(build_lattice(3, 0.2, 0.8, 4).unwrap());
    let p = Partition::new(l.clone());
    for m in 0..l.len() {
        assert_eq!(p.index(l.center(m)).unwrap(), m);
    }
}

#[test]
fn points_outside_the_cover_are_rejected() {
    let l = Arc::new(build_lattice(3, 0.2, 0.6, 4).unwrap());
    let p = Partition::new(l);
    assert!(p.index(&[0.99, 0.0, 0.0]).is_err());
}

#[test]
fn measures_bracketed_and_sum_to_union() {
    let l = Arc::new(build_lattice(2, 0.25, 0.8, 6).unwrap());
    let p = Partition::new(l.clone());
    for beta in [0.0, 1.0] {
        let ms = p.measures(beta).unwrap();
        let (lo, hi) = measure_ratio_bounds(2, l.r, beta);
        for (m, e) in ms.iter().enumerate() {
            let q = e.value / (1.0 - norm_sq(l.center(m))).powf(beta + 2.0);
            assert!(q > lo * 0.9 && q < hi * 1.1, "cell {m}: {q} outside [{lo}, {hi}]");
        }
        let total: f64 = ms.iter().map(|e| e.value).sum();
        let se = ms.iter().map(|e| e.std_err * e.std_err).sum::<f64>().sqrt();
        let (mc, mc_se) = union_measure(&l, beta, 400_000, 1);
        let z = (total - mc).abs() / (se * se + mc_se * mc_se).sqrt();
        assert!(z < 4.0, "beta {beta}: sum {total} vs union {mc}, z = {z}");
    }
}
