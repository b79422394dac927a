use hyperball::cli::{hyperbolic_laplacian_residual, main_with_args, run_suite, Check, Relation, Report, SuiteConfig};
use hyperball::geometry::{norm_sq, BoundaryPoint, Point};
use hyperball::kernels::{poisson_eval, KernelTable};
use hyperball::operators::ZonalExpansion;
use hyperball::Error;

fn small() -> SuiteConfig {
    SuiteConfig { samples: 300, ..SuiteConfig::default() }
}

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("hyperball").chain(list.iter().copied()).map(String::from).collect()
}

#[test]
fn json_round_trip_is_bit_exact() {
    let r = run_suite("geometry", &small()).unwrap();
    let back = Report::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back.checks.len(), r.checks.len());
    for (a, b) in r.checks.iter().zip(&back.checks) {
        assert_eq!(a.value.to_bits(), b.value.to_bits(), "{}", a.name);
        assert_eq!(a.threshold.to_bits(), b.threshold.to_bits());
        assert_eq!(a.pass, b.pass);
    }
    assert_eq!(back.config, r.config);
    assert_eq!(back.content_json().unwrap(), r.content_json().unwrap());
}

#[test]
fn awkward_values_survive_json() {
    let mut r = run_suite("odd-dim-witness", &small()).unwrap();
    for v in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, 0.1 + 0.2, f64::MIN_POSITIVE, -0.0, 1e308] {
        r.checks.push(Check::new("awkward", "report", v, Relation::Below, 1.0));
    }
    let back = Report::from_json(&r.to_json().unwrap()).unwrap();
    for (a, b) in r.checks.iter().zip(&back.checks) {
        if a.value.is_nan() {
            assert!(b.value.is_nan());
        } else {
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }
}

#[test]
fn csv_has_one_row_per_check() {
    let r = run_suite("specialfn", &small()).unwrap();
    let text = r.to_csv().unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["suite", "check", "anchor", "value", "threshold", "pass"]
    );
    assert_eq!(rd.records().count(), r.checks.len());
}

#[test]
fn empty_report_is_valid_json() {
    let r = Report::new("geometry", small(), Vec::new());
    assert!(r.pass);
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), 0);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    assert!(matches!(run_suite("nonsense", &small()), Err(Error::Usage(_))));
}

#[test]
fn exit_codes() {
    let dir = std::env::temp_dir().join(format!("hyperball-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("r.json");
    let code = main_with_args(args(&["--suite", "odd-dim-witness", "--out", out.to_str().unwrap()]));
    assert_eq!(code, 0);
    let r = Report::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(r.pass);
    assert_eq!(r.suite, "odd-dim-witness");

    let csv_out = dir.join("r.csv");
    let code = main_with_args(args(&["--suite", "quadrature", "--format", "csv", "--out", csv_out.to_str().unwrap()]));
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&csv_out).unwrap().starts_with("suite,check"));

    assert_eq!(main_with_args(args(&["--suite", "nonsense"])), 2);
    assert_eq!(main_with_args(args(&["--suite", "geometry", "--n", "1"])), 2);
    assert_eq!(main_with_args(args(&["--suite", "geometry", "--grid", "1,2"])), 2);
    assert_eq!(main_with_args(args(&["--bogus"])), 2);
    // A threshold that cannot be met makes the run fail.
    assert_eq!(main_with_args(args(&["--suite", "odd-dim-witness", "--tol", "1e-9", "--out", out.to_str().unwrap()])), 1);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn laplacian_residual_of_constant_is_zero() {
    let x = Point::new(vec![0.2, -0.1, 0.3]).unwrap();
    let r = hyperbolic_laplacian_residual(|_| Ok(2.5), &x, 1e-3).unwrap();
    assert!(r < 1e-9, "{r}");
}

#[test]
fn laplacian_residual_of_poisson_kernel() {
    let zeta = BoundaryPoint::e1(3);
    let x = Point::new(vec![0.3, 0.0, 0.0]).unwrap();
    let r = hyperbolic_laplacian_residual(|y| Ok(poisson_eval(y, zeta.coords())), &x, 1e-3).unwrap();
    assert!(r < 1e-5, "{r}");
}

#[test]
fn laplacian_residual_of_coordinate_function() {
    for n in [3, 4, 5] {
        let mut c = vec![0.1; n];
        c[0] = 0.4;
        let x = Point::new(c.clone()).unwrap();
        let want = 2.0 * (n as f64 - 2.0) * (1.0 - norm_sq(&c)) * c[0];
        let r = hyperbolic_laplacian_residual(|y| Ok(y[0]), &x, 1e-3).unwrap();
        assert!((r - want).abs() < 1e-6, "n={n}: {r} vs {want}");
    }
}

#[test]
fn kernel_slices_are_invariantly_harmonic() {
    let table = KernelTable::shared(3, 0.0, 400).unwrap();
    let f = ZonalExpansion::kernel_slice(&table, &[0.2, 0.3, -0.1], 60).unwrap();
    let x = Point::new(vec![-0.2, 0.1, 0.25]).unwrap();
    let r = hyperbolic_laplacian_residual(|y| f.value(y), &x, 1e-3).unwrap();
    assert!(r < 1e-5, "{r}");
}

#[test]
fn laplacian_residual_rejects_points_near_the_sphere() {
    let x = Point::new(vec![0.999, 0.0, 0.0]).unwrap();
    assert!(hyperbolic_laplacian_residual(|_| Ok(0.0), &x, 1e-3).is_err());
}
