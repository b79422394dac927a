//! One test per acceptance criterion. Each prints a single summary line
//! followed by the individual checks it is built from.

use hyperball::cli::{run_suite, Check, Report, SuiteConfig};
use std::io::Write;
use std::sync::OnceLock;

fn suite(name: &str, cfg: &SuiteConfig) -> Report {
    run_suite(name, cfg).unwrap_or_else(|e| panic!("suite {name} failed to run: {e}"))
}

fn pick<'a>(report: &'a Report, names: &[&str]) -> Vec<&'a Check> {
    names
        .iter()
        .map(|n| {
            report
                .checks
                .iter()
                .find(|c| c.name == *n)
                .unwrap_or_else(|| panic!("suite {} has no check {n}", report.suite))
        })
        .collect()
}

fn verdict(criterion: u32, title: &str, checks: &[&Check]) {
    let pass = checks.iter().all(|c| c.pass);
    let mut text = format!("criterion {criterion:>2} {}: {title}\n", if pass { "PASS" } else { "FAIL" });
    for c in checks {
        text.push_str(&format!("    {}\n", c.line()));
    }
    // bypasses libtest capture so passing criteria are reported too
    let _ = std::io::stderr().lock().write_all(text.as_bytes());
    assert!(pass, "criterion {criterion} ({title}) failed");
}

fn kernels_n3() -> &'static Report {
    static R: OnceLock<Report> = OnceLock::new();
    R.get_or_init(|| suite("kernels", &SuiteConfig::default()))
}

fn projection_n3() -> &'static Report {
    static R: OnceLock<Report> = OnceLock::new();
    R.get_or_init(|| suite("projection", &SuiteConfig::default()))
}

#[test]
fn criterion_01_geometry_identities() {
    let reports: Vec<Report> =
        [2, 3, 4].iter().map(|&n| suite("geometry", &SuiteConfig { n, ..SuiteConfig::default() })).collect();
    let names = [
        "mobius-weight-identity",
        "mobius-bracket-identity",
        "mobius-involution",
        "rho-equals-mobius-norm",
        "jacobian-finite-differences",
    ];
    let checks: Vec<&Check> = reports.iter().flat_map(|r| pick(r, &names)).collect();
    verdict(1, "geometry identities, n in {2,3,4}", &checks);
}

#[test]
fn criterion_02_special_functions() {
    let r = suite("specialfn", &SuiteConfig::default());
    let checks = pick(
        &r,
        &["s-at-one", "s-plane-identity", "s-dimension-four-closed-form", "zonal-reproducing", "harmonic-orthogonality"],
    );
    verdict(2, "radial factors and zonal harmonics", &checks);
}

#[test]
fn criterion_03_kernel_coefficients() {
    let checks = pick(kernels_n3(), &["c0-beta-closed-form", "cm-growth-bracket", "poisson-series"]);
    verdict(3, "kernel coefficients and Poisson kernel", &checks);
}

#[test]
fn criterion_04_reproducing_property() {
    verdict(4, "reproducing property, alpha in {0,1}", &pick(projection_n3(), &["reproducing-property"]));
}

#[test]
fn criterion_05_fractional_operator_consistency() {
    let checks = pick(projection_n3(), &["dts-integral-vs-series", "dts-inverse-round-trip", "dts-of-kernel"]);
    verdict(5, "fractional operator consistency", &checks);
}

#[test]
fn criterion_06_surjectivity_round_trip() {
    verdict(6, "projection of the weighted derivative", &pick(projection_n3(), &["projection-surjectivity"]));
}

#[test]
fn criterion_07_monomial_projection() {
    verdict(7, "projection of |y|^k q_j, n in {3,4}", &pick(projection_n3(), &["monomial-projection"]));
}

#[test]
fn criterion_08_duality_pairing() {
    let r = suite("duality-pairing", &SuiteConfig::default());
    verdict(8, "pairing with kernel slices", &pick(&r, &["pairing-reproduces-value", "pairing-independent-of-t"]));
}

#[test]
fn criterion_09_unbounded_bloch() {
    let r = suite("unbounded-bloch", &SuiteConfig::default());
    verdict(9, "unbounded Bloch function", &pick(&r, &["unbounded-log-growth", "bloch-estimates-stable"]));
}

#[test]
fn criterion_10_kernel_bloch_norm() {
    verdict(10, "kernel Bloch norm within a factor-3 bracket", &pick(kernels_n3(), &["kernel-bloch-norm-bracket"]));
}

#[test]
fn criterion_11_atomic_decomposition() {
    let cfg = SuiteConfig { r: 0.1, r_max: 0.95, ..SuiteConfig::default() };
    let r = suite("atomic", &cfg);
    let checks: Vec<&Check> = r.checks.iter().filter(|c| c.name != "little-bloch-tail").collect();
    verdict(11, "atomic decomposition, r = 0.1, R_max = 0.95", &checks);
}

#[test]
fn criterion_12_odd_even_dimension() {
    let r = suite("odd-dim-witness", &SuiteConfig::default());
    verdict(12, "polynomial fits of S_1", &pick(&r, &["odd-dimension-not-polynomial", "even-dimension-polynomial"]));
}

#[test]
fn criterion_13_determinism() {
    let small = SuiteConfig { r: 0.2, r_max: 0.9, samples: 2000, ..SuiteConfig::default() };
    let mut checks = Vec::new();
    for name in ["geometry", "specialfn", "quadrature", "odd-dim-witness", "duality-pairing", "lattice"] {
        let a = suite(name, &small).content_json().unwrap();
        let b = suite(name, &small).content_json().unwrap();
        let differ = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
        checks.push(Check::new(
            &format!("{name}-rerun-identical"),
            "determinism",
            differ as f64,
            hyperball::cli::Relation::AtMost,
            0.0,
        ));
    }
    let refs: Vec<&Check> = checks.iter().collect();
    verdict(13, "byte-identical reruns", &refs);
}
