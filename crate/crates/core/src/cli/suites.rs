//! The check batteries behind each suite name.

use super::{Artifacts, Check, Relation, SuiteConfig};
use crate::atomic::{standard_test_set, AtomicConfig, AtomicSystem, Normalization};
use crate::error::{Error, Result};
use crate::geometry::{
    beta_dist, bracket_sq_unchecked, bracket_unchecked, mobius, mobius_into, mobius_jacobian_det, norm, norm_sq,
    pseudo_ball_unchecked, rho_unchecked, BoundaryPoint, Point,
};
use crate::kernels::{poisson_eval, poisson_series, KernelTable};
use crate::lattice::{build_lattice, lattice_to_text, uniform_in_ball, Lattice, Partition};
use crate::operators::{
    bloch_norms, dts_series, pairing, unbounded_bloch_example, KernelIntegrator, SampledFunction, ZonalExpansion,
};
use crate::quadrature::{cm_table, BallRule, RadialRule, SphereRule};
use crate::specialfn::{
    dim_hm, gauss_2f1, s_factor, s_factor_derivative, zonal, HypergeometricParams, SmEvaluator,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

/// Degree of the truncated unbounded Bloch function.
pub const UNBOUNDED_DEGREE: usize = 3000;

fn stream(cfg: &SuiteConfig, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id)
}

fn unit(rng: &mut impl Rng, n: usize) -> BoundaryPoint {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let s = norm(&v);
        if s > 0.1 && s <= 1.0 {
            return BoundaryPoint::new(v.iter().map(|c| c / s).collect()).expect("unit vector");
        }
    }
}

fn scaled(dir: &BoundaryPoint, r: f64) -> Vec<f64> {
    dir.coords().iter().map(|c| r * c).collect()
}

fn guard(name: &str, anchor: &str, f: impl FnOnce() -> Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, anchor, &e))
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

pub(super) fn geometry(cfg: &SuiteConfig) -> Vec<Check> {
    let n = cfg.n;
    let mut rng = stream(cfg, 1);
    let mut phi = vec![0.0; n];
    let mut back = vec![0.0; n];
    let (mut ident, mut brk, mut inv, mut rh, mut lower) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize);
    for _ in 0..cfg.samples {
        let a = uniform_in_ball(&mut rng, n, 0.99);
        let x = uniform_in_ball(&mut rng, n, 0.99);
        mobius_into(&a, &x, &mut phi);
        let b2 = bracket_sq_unchecked(&x, &a);
        let (a2, x2) = (norm_sq(&a), norm_sq(&x));
        ident = ident.max(((1.0 - norm_sq(&phi)) - (1.0 - a2) * (1.0 - x2) / b2).abs());
        brk = brk.max((bracket_unchecked(&a, &phi) * b2.sqrt() - (1.0 - a2)).abs());
        mobius_into(&a, &phi, &mut back);
        inv = inv.max(max_abs(back.iter().zip(&x).map(|(p, q)| p - q)));
        rh = rh.max((rho_unchecked(&a, &x) - norm(&phi)).abs());
        if bracket_unchecked(&x, &a) < 1.0 - (a2 * x2).sqrt() || bracket_unchecked(&x, &a) != bracket_unchecked(&a, &x) {
            lower += 1;
        }
    }
    let mut checks = vec![
        Check::new("mobius-weight-identity", "mobius-identity", ident, Relation::Below, cfg.tol(1e-12)),
        Check::new("mobius-bracket-identity", "mobius-bracket", brk, Relation::Below, cfg.tol(1e-12)),
        Check::new("mobius-involution", "mobius-involution", inv, Relation::Below, cfg.tol(1e-12)),
        Check::new("rho-equals-mobius-norm", "pseudo-hyperbolic-metric", rh, Relation::Below, cfg.tol(1e-12)),
        Check::new("bracket-symmetric-and-bounded-below", "bracket", lower as f64, Relation::AtMost, 0.0),
    ];

    let jac = guard("jacobian-finite-differences", "mobius-jacobian", || {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let (mut yp, mut ym) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..(cfg.samples / 10).max(1) {
            let a = uniform_in_ball(&mut rng, n, 0.9);
            let x = uniform_in_ball(&mut rng, n, 0.9);
            let mut jm = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                mobius_into(&a, &xp, &mut yp);
                mobius_into(&a, &xm, &mut ym);
                for i in 0..n {
                    jm[(i, j)] = (yp[i] - ym[i]) / (2.0 * h);
                }
            }
            let exact = mobius_jacobian_det(&Point::new(a)?, &Point::new(x)?)?;
            worst = worst.max((jm.determinant().abs() - exact).abs() / exact);
        }
        Ok(Check::new("jacobian-finite-differences", "mobius-jacobian", worst, Relation::Below, cfg.tol(1e-6)))
    });
    checks.push(jac);

    let mut violations = 0usize;
    let mut tightest: f64 = f64::INFINITY;
    for _ in 0..cfg.samples {
        let a = uniform_in_ball(&mut rng, n, 0.99);
        let b = uniform_in_ball(&mut rng, n, 0.99);
        let x = uniform_in_ball(&mut rng, n, 0.99);
        let p = rho_unchecked(&a, &b);
        let (lo, hi) = ((1.0 - p) / (1.0 + p), (1.0 + p) / (1.0 - p));
        let q1 = (1.0 - norm(&a)) / (1.0 - norm(&b));
        let q2 = bracket_unchecked(&x, &a) / bracket_unchecked(&x, &b);
        for q in [q1, q2] {
            if !(lo <= q && q <= hi) {
                violations += 1;
            }
            tightest = tightest.min((q / lo).ln().min((hi / q).ln()));
        }
    }
    checks.push(
        Check::new("ratio-bracket", "ratio-bracket", violations as f64, Relation::AtMost, 0.0)
            .with("smallest-log-margin", tightest),
    );

    let inv_b = guard("beta-invariance", "hyperbolic-metric", || {
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.samples {
            let a = Point::new(uniform_in_ball(&mut rng, n, 0.9))?;
            let b = Point::new(uniform_in_ball(&mut rng, n, 0.9))?;
            let c = Point::new(uniform_in_ball(&mut rng, n, 0.9))?;
            let d0 = beta_dist(&a, &b)?;
            let d1 = beta_dist(&mobius(&c, &a)?, &mobius(&c, &b)?)?;
            worst = worst.max((d1 - d0).abs());
        }
        Ok(Check::new("beta-invariance", "hyperbolic-metric", worst, Relation::Below, cfg.tol(1e-10)))
    });
    checks.push(inv_b);

    let mut wrong = 0usize;
    for _ in 0..(cfg.samples / 10).max(1) {
        let a = uniform_in_ball(&mut rng, n, 0.95);
        let r = 0.05 + 0.85 * rng.random::<f64>();
        let e = pseudo_ball_unchecked(&a, r);
        for _ in 0..10 {
            let u = uniform_in_ball(&mut rng, n, 1.0);
            let y: Vec<f64> = e.center.iter().zip(&u).map(|(c, v)| c + 1.5 * e.radius * v).collect();
            if norm(&y) >= 1.0 {
                continue;
            }
            let d = rho_unchecked(&y, &a);
            let inside = e.contains(&y);
            if (d < r - 1e-10 && !inside) || (d > r + 1e-10 && inside) {
                wrong += 1;
            }
        }
    }
    checks.push(Check::new("pseudo-ball-membership", "pseudo-ball", wrong as f64, Relation::AtMost, 0.0));
    checks
}

pub(super) fn specialfn(cfg: &SuiteConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut dims = vec![2, 3, 4, 5];
    if !dims.contains(&cfg.n) {
        dims.push(cfg.n);
    }
    checks.push(guard("s-at-one", "radial-factor", || {
        let mut worst: f64 = 0.0;
        for &n in &dims {
            for m in 0..=100 {
                worst = worst.max((s_factor(n, m, 1.0)? - 1.0).abs());
            }
        }
        Ok(Check::new("s-at-one", "radial-factor", worst, Relation::AtMost, 0.0))
    }));
    checks.push(guard("s-plane-identity", "radial-factor", || {
        let mut worst: f64 = 0.0;
        for m in 0..=100 {
            for i in 0..=100 {
                worst = worst.max((s_factor(2, m, i as f64 / 100.0)? - 1.0).abs());
            }
        }
        Ok(Check::new("s-plane-identity", "radial-factor", worst, Relation::Below, cfg.tol(1e-14)))
    }));
    checks.push(guard("s-dimension-four-closed-form", "radial-factor", || {
        let mut worst: f64 = 0.0;
        for m in 0..=100 {
            for i in 0..=100 {
                let r = i as f64 / 100.0;
                let want = ((m + 2) as f64 - m as f64 * r * r) / 2.0;
                worst = worst.max((s_factor(4, m, r)? - want).abs() / want);
            }
        }
        Ok(Check::new("s-dimension-four-closed-form", "radial-factor", worst, Relation::Below, cfg.tol(1e-12)))
    }));
    checks.push(guard("s-derivative-finite-differences", "hypergeometric-derivative", || {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for &n in &dims {
            for m in [1, 2, 5, 10, 20] {
                for i in 1..=9 {
                    let r = i as f64 / 10.0;
                    let fd = (s_factor(n, m, r + h)? - s_factor(n, m, r - h)?) / (2.0 * h);
                    let d = s_factor_derivative(n, m, r)?;
                    worst = worst.max((fd - d).abs() / d.abs().max(1e-3));
                }
            }
        }
        Ok(Check::new("s-derivative-finite-differences", "hypergeometric-derivative", worst, Relation::Below, cfg.tol(1e-6)))
    }));
    checks.push(guard("hypergeometric-examples", "hypergeometric", || {
        let f = |a, b, c, z| gauss_2f1(HypergeometricParams { a, b, c, z });
        let errs = [
            f(1.0, 1.0, 2.0, 0.5)? - 2.0 * 2f64.ln(),
            f(2.0, -1.0, 4.0, 1.0)? - 0.5,
            f(7.0, 0.0, 2.5, 0.9)? - 1.0,
        ];
        Ok(Check::new("hypergeometric-examples", "hypergeometric", max_abs(errs), Relation::Below, cfg.tol(1e-14)))
    }));
    checks.push(guard("s-growth-bound", "radial-factor-bound", || {
        let mut min_s = f64::INFINITY;
        let mut drift: f64 = 0.0;
        for n in [3, 4, 5] {
            let ev = SmEvaluator::new(n, 200)?;
            let mut c = vec![0.0; 201];
            for i in 0..=50 {
                let r = i as f64 / 50.0;
                let p = ev.profile(r, 200)?;
                for m in 1..=200 {
                    min_s = min_s.min(p[m]);
                    c[m] = f64::max(c[m], p[m] / (m as f64).powf(n as f64 / 2.0 - 1.0));
                }
            }
            let early = c[51..=100].iter().cloned().fold(0.0, f64::max);
            let late = c[101..=200].iter().cloned().fold(0.0, f64::max);
            drift = drift.max(late / early);
        }
        Ok(Check::new("s-growth-bound", "radial-factor-bound", drift, Relation::AtMost, 1.0 + cfg.tol(0.05))
            .with("min-s", min_s))
    }));
    checks.push(guard("s-lower-bound", "radial-factor-bound", || {
        let mut min_s = f64::INFINITY;
        for &n in &dims {
            let ev = SmEvaluator::new(n, 200)?;
            for i in 0..=100 {
                min_s = min_s.min(ev.profile(i as f64 / 100.0, 200)?.iter().cloned().fold(f64::INFINITY, f64::min));
            }
        }
        Ok(Check::new("s-lower-bound", "radial-factor-bound", min_s, Relation::AtLeast, 1.0 - cfg.tol(1e-14)))
    }));
    checks.push(guard("s-nonincreasing", "radial-factor", || {
        let n = cfg.n;
        let ev = SmEvaluator::new(n, 50)?;
        let mut prev = ev.profile(0.0, 50)?;
        let mut bad = 0usize;
        for i in 1..=1000 {
            let p = ev.profile(i as f64 / 1000.0, 50)?;
            bad += p.iter().zip(&prev).filter(|(a, b)| **a > **b * (1.0 + 4.0 * f64::EPSILON)).count();
            prev = p;
        }
        Ok(Check::new("s-nonincreasing", "radial-factor", bad as f64, Relation::AtMost, 0.0))
    }));
    let mut rng = stream(cfg, 2);
    checks.push(guard("zonal-diagonal-bound", "zonal-bound", || {
        let n = cfg.n;
        let mut bad = 0usize;
        for _ in 0..cfg.samples {
            let (e, z) = (unit(&mut rng, n), unit(&mut rng, n));
            let m = rng.random_range(0..=50);
            if zonal(n, m, e.coords(), z.coords())?.abs() > dim_hm(n, m) as f64 * (1.0 + 1e-12) {
                bad += 1;
            }
        }
        Ok(Check::new("zonal-diagonal-bound", "zonal-bound", bad as f64, Relation::AtMost, 0.0))
    }));
    let n = cfg.n;
    let harmonics: Vec<Vec<(f64, BoundaryPoint)>> = (0..=12)
        .map(|_| (0..3).map(|_| (rng.random::<f64>() * 2.0 - 1.0, unit(&mut rng, n))).collect())
        .collect();
    let q = |m: usize, x: &[f64]| -> Result<f64> {
        harmonics[m].iter().map(|(w, p)| Ok(w * zonal(n, m, x, p.coords())?)).sum()
    };
    checks.push(guard("zonal-reproducing", "zonal-reproducing", || {
        let mut worst: f64 = 0.0;
        for m in 0..=12 {
            let rule = SphereRule::new(n, 2 * m)?;
            for _ in 0..5 {
                let eta = unit(&mut rng, n);
                let mut acc = 0.0;
                for j in 0..rule.len() {
                    acc += rule.weights[j] * q(m, rule.node(j))? * zonal(n, m, eta.coords(), rule.node(j))?;
                }
                worst = worst.max((acc - q(m, eta.coords())?).abs());
            }
        }
        Ok(Check::new("zonal-reproducing", "zonal-reproducing", worst, Relation::Below, cfg.tol(1e-8)))
    }));
    checks.push(guard("harmonic-orthogonality", "orthogonality", || {
        let rule = SphereRule::new(n, 24)?;
        let mut vals = vec![vec![0.0; rule.len()]; 13];
        for (m, row) in vals.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = q(m, rule.node(j))?;
            }
        }
        let mut worst: f64 = 0.0;
        for m in 0..=12 {
            for k in 0..m {
                let s: f64 = (0..rule.len()).map(|j| rule.weights[j] * vals[m][j] * vals[k][j]).sum();
                worst = worst.max(s.abs());
            }
        }
        Ok(Check::new("harmonic-orthogonality", "orthogonality", worst, Relation::Below, cfg.tol(1e-10)))
    }));
    checks
}

/// `(n/2) B(n/2 + k, alpha + 1)`, the `nu_alpha` moment of `|y|^{2k}`.
fn ball_moment(n: usize, alpha: f64, k: usize) -> f64 {
    let h = n as f64 / 2.0;
    h * (ln_gamma(h + k as f64) + ln_gamma(alpha + 1.0) - ln_gamma(h + k as f64 + alpha + 1.0)).exp()
}

pub(super) fn quadrature(cfg: &SuiteConfig) -> Vec<Check> {
    let n = cfg.n;
    let mut alphas = vec![-0.5, 0.0, 1.0];
    if !alphas.contains(&cfg.alpha) {
        alphas.push(cfg.alpha);
    }
    let mut checks = Vec::new();
    checks.push(guard("radial-moments", "radial-rule", || {
        let mut worst: f64 = 0.0;
        for &a in &alphas {
            let rule = RadialRule::new(n, a, 128)?;
            for k in 0..=60 {
                let got = rule.integrate(|r| r.powi(2 * k as i32));
                worst = worst.max((got / ball_moment(n, a, k) - 1.0).abs());
            }
        }
        Ok(Check::new("radial-moments", "radial-rule", worst, Relation::Below, cfg.tol(1e-12)))
    }));
    checks.push(guard("sphere-moments", "sphere-rule", || {
        let rule = SphereRule::new(n, 16)?;
        let h = n as f64 / 2.0;
        let mut worst: f64 = 0.0;
        for k in 0..=8 {
            let want = (ln_gamma(h) + ln_gamma(k as f64 + 0.5) - ln_gamma(0.5) - ln_gamma(k as f64 + h)).exp();
            let got: f64 = (0..rule.len()).map(|j| rule.weights[j] * rule.node(j)[0].powi(2 * k as i32)).sum();
            worst = worst.max((got / want - 1.0).abs());
            let odd: f64 =
                (0..rule.len()).map(|j| rule.weights[j] * rule.node(j)[0].powi(2 * k as i32 + 1) * rule.node(j)[1]).sum();
            worst = worst.max(odd.abs());
        }
        Ok(Check::new("sphere-moments", "sphere-rule", worst, Relation::Below, cfg.tol(1e-13)))
    }));
    checks.push(guard("ball-moments", "ball-rule", || {
        let mut worst: f64 = 0.0;
        for &a in &alphas {
            let rule = BallRule::new(n, a, 64, 8)?;
            let mut y = vec![0.0; n];
            for k in 0..=4 {
                let mut got = 0.0;
                for i in 0..rule.len() {
                    rule.node_into(i, &mut y);
                    got += rule.weight(i) * norm_sq(&y).powi(k as i32) * (1.0 + y[0]);
                }
                worst = worst.max((got / ball_moment(n, a, k) - 1.0).abs());
            }
        }
        Ok(Check::new("ball-moments", "ball-rule", worst, Relation::Below, cfg.tol(1e-12)))
    }));
    checks.push(guard("cm-independent-rule", "kernel-coefficients", || {
        let mut worst: f64 = 0.0;
        let ev = SmEvaluator::new(n, 100)?;
        for &a in &alphas {
            let table = cm_table(n, a, 100)?;
            let rule = RadialRule::new(n, a, 512)?;
            for (m, c) in table.iter().enumerate() {
                let inv = rule.integrate(|r| ev.value(m, r).map(|v| v * v).unwrap_or(f64::NAN) * r.powi(2 * m as i32));
                worst = worst.max((c * inv - 1.0).abs());
            }
        }
        Ok(Check::new("cm-independent-rule", "kernel-coefficients", worst, Relation::Below, cfg.tol(1e-10)))
    }));
    checks.push(guard("bracket-integral-growth", "bracket-integral", || {
        let s_exp = cfg.alpha;
        let mut c = Check::new("bracket-integral-growth", "bracket-integral", 0.0, Relation::AtMost, 2.0);
        let mut worst: f64 = 1.0;
        for t in [0.5, 0.0, -0.5] {
            let scaled = |q: f64| {
                let v = bracket_power_integral(n, s_exp, t, q);
                let w = 1.0 - q * q;
                if t > 0.0 {
                    v * w.powf(t)
                } else if t == 0.0 {
                    v / (1.0 + (1.0 / w).ln())
                } else {
                    v
                }
            };
            let vals: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|&q| scaled(q)).collect();
            let q = vals[2] / vals[1];
            worst = worst.max(q.max(1.0 / q));
            for (r, v) in [0.9, 0.99, 0.999].iter().zip(&vals) {
                c = c.with(&format!("t{t}-x{r}"), *v);
            }
        }
        c.value = worst;
        c.pass = c.relation.holds(worst, c.threshold);
        Ok(c)
    }));
    checks
}

/// `int_B (1-|y|^2)^s / [x,y]^{n+s+t} dnu(y)` for `|x| = q`, by composite
/// Gauss-Legendre on panels that shrink geometrically toward the sphere
/// radially and toward the direction of `x` angularly.
pub fn bracket_power_integral(n: usize, s: f64, t: f64, q: f64) -> f64 {
    const PANELS: i32 = 44;
    let (gx, gw) = crate::quadrature::gauss_jacobi(16, 0.0, 0.0).expect("Gauss-Legendre nodes");
    let panel_nodes = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        gx.iter().zip(&gw).map(|(x, w)| (lo + (hi - lo) * (x + 1.0) / 2.0, w * (hi - lo) / 2.0)).collect()
    };
    let mut radial = Vec::new();
    let mut angular = Vec::new();
    for k in 0..PANELS {
        let (a, b) = (0.5f64.powi(k + 1), 0.5f64.powi(k));
        radial.extend(panel_nodes(a, b));
        angular.extend(panel_nodes(std::f64::consts::PI * a, std::f64::consts::PI * b));
    }
    let h = n as f64 / 2.0;
    let sphere_norm = (ln_gamma(h) - 0.5 * std::f64::consts::PI.ln() - ln_gamma(h - 0.5)).exp();
    let p = n as f64 + s + t;
    let mut total = 0.0;
    for &(e, we) in &radial {
        let r = 1.0 - e;
        let rq = r * q;
        let mut inner = 0.0;
        for &(th, wt) in &angular {
            let b2 = (1.0 - rq) * (1.0 - rq) + 2.0 * rq * (1.0 - th.cos());
            inner += wt * th.sin().powi(n as i32 - 2) * b2.powf(-p / 2.0);
        }
        total += we * n as f64 * r.powi(n as i32 - 1) * (e * (2.0 - e)).powf(s) * sphere_norm * inner;
    }
    total
}

pub(super) fn kernels(cfg: &SuiteConfig) -> Vec<Check> {
    let n = cfg.n;
    let mut checks = Vec::new();
    checks.push(guard("c0-beta-closed-form", "kernel-coefficients", || {
        let mut worst: f64 = 0.0;
        let mut alphas = vec![0.0, 1.0];
        if !alphas.contains(&cfg.alpha) {
            alphas.push(cfg.alpha);
        }
        for a in alphas {
            let c0 = cm_table(n, a, 1)?[0];
            worst = worst.max((c0 * ball_moment(n, a, 0) - 1.0).abs());
        }
        Ok(Check::new("c0-beta-closed-form", "kernel-coefficients", worst, Relation::Below, cfg.tol(1e-10)))
    }));
    checks.push(guard("cm-growth-bracket", "kernel-coefficient-growth", || {
        let t = KernelTable::shared(n, cfg.alpha, 200)?;
        let v: Vec<f64> = (20..=200).map(|m| t.coeffs[m] / (m as f64).powf(cfg.alpha + 1.0)).collect();
        let (lo, hi) = (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(0.0, f64::max));
        Ok(Check::new("cm-growth-bracket", "kernel-coefficient-growth", hi / lo, Relation::AtMost, 2.0)
            .with("min", lo)
            .with("max", hi))
    }));
    checks.push(guard("poisson-series", "poisson-kernel", || {
        let mut rng = stream(cfg, 3);
        let mut worst: f64 = 0.0;
        for _ in 0..(cfg.samples / 10).max(1) {
            let x = uniform_in_ball(&mut rng, n, 0.9);
            let z = unit(&mut rng, n);
            let closed = poisson_eval(&x, z.coords());
            worst = worst.max((poisson_series(&x, z.coords(), 1e-13)? - closed).abs() / closed);
        }
        Ok(Check::new("poisson-series", "poisson-kernel", worst, Relation::Below, cfg.tol(1e-8)))
    }));
    checks.push(guard("kernel-bloch-norm-bracket", "kernel-bloch-norm", || {
        let vals = kernel_norm_profile(cfg)?;
        let lo = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v.1).fold(0.0, f64::max);
        let mut c = Check::new("kernel-bloch-norm-bracket", "kernel-bloch-norm", hi / lo, Relation::AtMost, 9.0);
        for (ra, v) in vals {
            c = c.with(&format!("scaled-norm-a{ra}"), v);
        }
        Ok(c)
    }));
    checks
}

/// Pairs `(|a|, ||R_alpha(., a)||_B,est (1-|a|^2)^{alpha+n})` for `|a| <= 0.99`.
pub fn kernel_norm_profile(cfg: &SuiteConfig) -> Result<Vec<(f64, f64)>> {
    let n = cfg.n;
    let table = KernelTable::shared(n, cfg.alpha, 8000)?;
    let radii = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.97, 0.98, 0.99];
    radii
        .iter()
        .map(|&ra| {
            let mut a = vec![0.0; n];
            a[0] = ra;
            let k = ZonalExpansion::slice_degree(&table, ra, cfg.grid.r_max, 1e-10)?;
            let f = ZonalExpansion::kernel_slice(&table, &a, k.max(1))?;
            let rep = bloch_norms(&f, &[], &cfg.grid)?;
            Ok((ra, rep.norm * (1.0 - ra * ra).powf(cfg.alpha + n as f64)))
        })
        .collect()
}

/// Kernel slices `R_alpha(., b)` with `|b|` in {0.3, 0.5} and Poisson terms of
/// degree 1, 3, 6.
pub(super) fn projection_test_set(n: usize, alpha: f64, x_max: f64, seed: u64) -> Result<Vec<ZonalExpansion>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = KernelTable::shared(n, alpha, 3000)?;
    let mut set = Vec::new();
    for rb in [0.3, 0.5] {
        let b = scaled(&unit(&mut rng, n), rb);
        let k = ZonalExpansion::slice_degree(&table, rb, x_max, 1e-13)?;
        set.push(ZonalExpansion::kernel_slice(&table, &b, k)?);
    }
    for m in [1, 3, 6] {
        set.push(ZonalExpansion::poisson_term(m, &unit(&mut rng, n)));
    }
    Ok(set)
}

fn sample_points(rng: &mut impl Rng, n: usize, rad: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| uniform_in_ball(rng, n, rad)).collect()
}

/// Integrates `R(x, .) phi` for an expansion sampled on a rule of weight
/// `rule_alpha`, multiplied by `(1-|y|^2)^power`.
fn integrator(
    f: &ZonalExpansion,
    table: Arc<KernelTable>,
    rule_alpha: f64,
    power: f64,
    radial_nodes: usize,
    x_max: f64,
) -> Result<KernelIntegrator> {
    let band = f.max_degree();
    let rule = Arc::new(BallRule::new(f.dim(), rule_alpha, radial_nodes, 2 * band + 2)?);
    let phi = SampledFunction::from_expansion(rule, f, power)?;
    KernelIntegrator::new(table, &phi, x_max, 1e-13)
}

pub(super) fn projection(cfg: &SuiteConfig) -> Vec<Check> {
    let n = cfg.n;
    let x_max = 0.7;
    let mut rng = stream(cfg, 4);
    let pts = sample_points(&mut rng, n, x_max, 20);
    let mut checks = Vec::new();
    checks.push(guard("reproducing-property", "bergman-reproducing", || {
        let mut worst: f64 = 0.0;
        for alpha in [0.0, 1.0] {
            let table = KernelTable::shared(n, alpha, 3000)?;
            for f in projection_test_set(n, alpha, x_max, cfg.seed)? {
                let ig = integrator(&f, table.clone(), alpha, 0.0, 64, x_max)?;
                for x in &pts {
                    let v = f.value(x)?;
                    worst = worst.max((ig.eval(x)? - v).abs() / (1.0 + v.abs()));
                }
            }
        }
        Ok(Check::new("reproducing-property", "bergman-reproducing", worst, Relation::Below, cfg.tol(1e-6)))
    }));
    let pairs = [(0.0, 1.0), (1.0, 0.5)];
    checks.push(guard("dts-integral-vs-series", "fractional-derivative", || {
        let mut worst: f64 = 0.0;
        for (s, t) in pairs {
            let table = KernelTable::shared(n, s + t, 3000)?;
            for f in projection_test_set(n, s, x_max, cfg.seed)? {
                let ig = integrator(&f, table.clone(), s, 0.0, 64, x_max)?;
                let d = dts_series(&f, s, t)?;
                for x in &pts {
                    worst = worst.max((ig.eval(x)? - d.value(x)?).abs());
                }
            }
        }
        Ok(Check::new("dts-integral-vs-series", "fractional-derivative", worst, Relation::Below, cfg.tol(1e-6)))
    }));
    checks.push(guard("dts-inverse-round-trip", "fractional-inverse", || {
        let mut worst: f64 = 0.0;
        for (s, t) in pairs {
            for f in projection_test_set(n, s, x_max, cfg.seed)? {
                let back = dts_series(&dts_series(&f, s, t)?, s + t, -t)?;
                for (p, q) in back.poles().iter().zip(f.poles()) {
                    for (a, b) in p.coeffs.iter().zip(&q.coeffs) {
                        if *b != 0.0 {
                            worst = worst.max(((a - b) / b).abs());
                        }
                    }
                }
            }
        }
        Ok(Check::new("dts-inverse-round-trip", "fractional-inverse", worst, Relation::Below, cfg.tol(1e-12)))
    }));
    checks.push(guard("dts-of-kernel", "fractional-kernel", || {
        let mut worst: f64 = 0.0;
        for (s, t) in pairs {
            let ts = KernelTable::shared(n, s, 3000)?;
            let tst = KernelTable::shared(n, s + t, 3000)?;
            for rb in [0.3, 0.6] {
                let y = scaled(&unit(&mut rng, n), rb);
                let k = ZonalExpansion::slice_degree(&tst, rb, x_max, 1e-12)?;
                let g = dts_series(&ZonalExpansion::kernel_slice(&ts, &y, k)?, s, t)?;
                for x in &pts {
                    worst = worst.max((g.value(x)? - tst.eval(x, &y, 1e-12)?).abs());
                }
            }
        }
        Ok(Check::new("dts-of-kernel", "fractional-kernel", worst, Relation::Below, cfg.tol(1e-6)))
    }));
    checks.push(guard("projection-surjectivity", "projection-onto", || {
        let mut worst: f64 = 0.0;
        for (s, t) in pairs {
            let table = KernelTable::shared(n, s, 3000)?;
            for f in projection_test_set(n, s, x_max, cfg.seed)? {
                let d = dts_series(&f, s, t)?;
                let ig = integrator(&d, table.clone(), s, t, 256, x_max)?;
                for x in &pts {
                    let v = f.value(x)?;
                    worst = worst.max((ig.eval(x)? - v).abs() / (1.0 + v.abs()));
                }
            }
        }
        Ok(Check::new("projection-surjectivity", "projection-onto", worst, Relation::Below, cfg.tol(1e-5)))
    }));
    checks.push(guard("monomial-projection", "polynomial-projection", || {
        let mut worst: f64 = 0.0;
        let mut dims = vec![3, 4];
        if !dims.contains(&n) {
            dims.push(n);
        }
        for &d in &dims {
            worst = worst.max(monomial_projection_error(d, cfg.alpha, 4, 4, cfg.seed)?);
        }
        Ok(Check::new("monomial-projection", "polynomial-projection", worst, Relation::Below, cfg.tol(1e-6)))
    }));
    checks
}

/// Largest `|P_alpha(|y|^k q_j)(x) - C S_j(|x|) q_j(x)|` over `k <= k_max`,
/// `j <= j_max` and sample points with `|x| <= 0.7`, where `q_j = Z_j(., eta)`
/// and `C = c_j(alpha) int n r^{n-1} S_j(r) r^{k+2j} (1-r^2)^alpha dr`.
pub fn monomial_projection_error(n: usize, alpha: f64, k_max: usize, j_max: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let table = KernelTable::shared(n, alpha, 3000)?;
    let radial = RadialRule::new(n, alpha, 256)?;
    let ev = SmEvaluator::new(n, j_max)?;
    let pts = sample_points(&mut rng, n, 0.7, 10);
    let mut worst: f64 = 0.0;
    for j in 0..=j_max {
        let eta = unit(&mut rng, n);
        let rule = Arc::new(BallRule::new(n, alpha, 256, 2 * j + 2)?);
        for k in 0..=k_max {
            let phi = SampledFunction::sample(
                rule.clone(),
                |y| Ok(norm(y).powi(k as i32) * zonal(n, j, y, eta.coords())?),
                Some(j),
            )?;
            let ig = KernelIntegrator::new(table.clone(), &phi, 0.7, 1e-13)?;
            let mut integral = 0.0;
            for (&r, &w) in radial.nodes.iter().zip(&radial.weights) {
                integral += w * ev.value(j, r)? * r.powi((k + 2 * j) as i32);
            }
            let c = table.coeffs[j] * integral;
            for x in &pts {
                let want = c * ev.value(j, norm(x))? * zonal(n, j, x, eta.coords())?;
                worst = worst.max((ig.eval(x)? - want).abs());
            }
        }
    }
    Ok(worst)
}

pub(super) fn duality_pairing(cfg: &SuiteConfig) -> Vec<Check> {
    let n = cfg.n;
    let alpha = cfg.alpha;
    let mut rng = stream(cfg, 5);
    let out = (|| -> Result<(f64, f64)> {
        let table = KernelTable::shared(n, alpha, 3000)?;
        let mut gs = vec![ZonalExpansion::poisson_term(1, &unit(&mut rng, n)), ZonalExpansion::poisson_term(3, &unit(&mut rng, n))];
        let terms: Vec<(usize, Vec<(f64, BoundaryPoint)>)> =
            (0..=5).map(|m| (m, vec![(rng.random::<f64>() * 2.0 - 1.0, unit(&mut rng, n))])).collect();
        gs.push(ZonalExpansion::new(n, &terms)?);
        let (mut recover, mut spread): (f64, f64) = (0.0, 0.0);
        for r0 in [0.0, 0.4] {
            let x0 = scaled(&unit(&mut rng, n), r0);
            let k = ZonalExpansion::slice_degree(&table, r0, 0.999, 1e-12)?.max(1);
            let f = ZonalExpansion::kernel_slice(&table, &x0, k)?;
            for g in &gs {
                let want = g.value(&x0)?;
                let vals = [0.5, 2.0].iter().map(|&t| pairing(&f, g, alpha, t, 96)).collect::<Result<Vec<f64>>>()?;
                for v in &vals {
                    recover = recover.max((v - want).abs());
                }
                spread = spread.max((vals[0] - vals[1]).abs());
            }
        }
        Ok((recover, spread))
    })();
    let mut checks = match out {
        Ok((recover, spread)) => vec![
            Check::new("pairing-reproduces-value", "pairing-identity", recover, Relation::Below, cfg.tol(1e-6)),
            Check::new("pairing-independent-of-t", "pairing-identity", spread, Relation::Below, cfg.tol(1e-6)),
        ],
        Err(e) => vec![
            Check::failed("pairing-reproduces-value", "pairing-identity", &e),
            Check::failed("pairing-independent-of-t", "pairing-identity", &e),
        ],
    };
    checks.push(guard("pairing-truncated-limit", "pairing-limit", || {
        let table = KernelTable::shared(n, alpha, 3000)?;
        let x0 = scaled(&unit(&mut rng, n), 0.4);
        let k = ZonalExpansion::slice_degree(&table, 0.4, 0.999, 1e-12)?;
        let f = ZonalExpansion::kernel_slice(&table, &x0, k)?;
        let g = ZonalExpansion::poisson_term(3, &unit(&mut rng, n));
        let full = pairing(&f, &g, alpha, cfg.t, 96)?;
        let parts = [0.9, 0.99, 0.999]
            .iter()
            .map(|&rho| truncated_pairing(&f, &g, alpha, cfg.t, rho))
            .collect::<Result<Vec<f64>>>()?;
        let (d1, d2, e) = ((parts[1] - parts[0]).abs(), (parts[2] - parts[1]).abs(), (parts[2] - full).abs());
        Ok(Check::new("pairing-truncated-limit", "pairing-limit", (d2 / d1).max(e / d2), Relation::Below, 1.0)
            .with("r0.9", parts[0])
            .with("r0.99", parts[1])
            .with("r0.999", parts[2])
            .with("absolute-form", full))
    }));
    checks
}

/// The pairing integrand `f (1-|x|^2)^t D^t_alpha g` integrated against
/// `nu_alpha` over `|x| <= rho` only.
pub fn truncated_pairing(f: &ZonalExpansion, g: &ZonalExpansion, alpha: f64, t: f64, rho: f64) -> Result<f64> {
    let n = f.dim();
    let dg = dts_series(g, alpha, t)?;
    let sphere = SphereRule::new(n, f.max_degree() + g.max_degree())?;
    let (gx, gw) = crate::quadrature::gauss_jacobi(96, 0.0, 0.0)?;
    let parts = gx
        .par_iter()
        .zip(&gw)
        .map(|(&u, &w)| {
            let r = rho * (u + 1.0) / 2.0;
            let mut y = vec![0.0; n];
            let mut acc = 0.0;
            for j in 0..sphere.len() {
                for (yi, zi) in y.iter_mut().zip(sphere.node(j)) {
                    *yi = r * zi;
                }
                acc += sphere.weights[j] * f.value(&y)? * dg.value(&y)?;
            }
            Ok(w * rho / 2.0 * n as f64 * r.powi(n as i32 - 1) * (1.0 - r * r).powf(alpha + t) * acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

pub(super) fn unbounded_bloch(cfg: &SuiteConfig) -> Vec<Check> {
    let n = cfg.n;
    let f = match unbounded_bloch_example(n, UNBOUNDED_DEGREE) {
        Ok(f) => f,
        Err(e) => return vec![Check::failed("unbounded-growth", "unbounded-bloch", &e)],
    };
    let mut checks = Vec::new();
    for r in [0.9, 0.99, 0.999] {
        checks.push(guard("unbounded-growth", "unbounded-bloch", || {
            let x = Point::on_axis(n, r)?;
            let v = f.value(x.coords())?;
            let partial: f64 = (1..=UNBOUNDED_DEGREE).map(|m| r.powi(m as i32) / m as f64).sum();
            Ok(Check::new(&format!("unbounded-growth-r{r}"), "unbounded-bloch", v, Relation::AtLeast, 0.5 * partial)
                .with("log-bound", 0.5 * (1.0 / (1.0 - r)).ln()))
        }));
    }
    checks.push(guard("unbounded-log-growth", "unbounded-bloch", || {
        let v = f.value(Point::on_axis(n, 0.999)?.coords())?;
        Ok(Check::new("unbounded-log-growth", "unbounded-bloch", v, Relation::AtLeast, 0.5 * 1000f64.ln()))
    }));
    let configs = [(0.0, 1.0), (cfg.alpha, cfg.t)];
    match (bloch_norms(&f, &configs, &cfg.grid), bloch_norms(&f, &configs, &cfg.grid.refined())) {
        (Ok(a), Ok(b)) => {
            let rel = |x: f64, y: f64| (x - y).abs() / x.max(y);
            let mut pairs = vec![("seminorm", a.seminorm, b.seminorm), ("norm", a.norm, b.norm)];
            for (wa, wb) in a.weighted.iter().zip(&b.weighted) {
                pairs.push(("weighted", wa.value, wb.value));
            }
            let worst = pairs.iter().map(|(_, x, y)| rel(*x, *y)).fold(0.0, f64::max);
            checks.push(
                Check::new("bloch-estimates-stable", "unbounded-bloch", worst, Relation::Below, cfg.tol(0.2))
                    .with("seminorm", a.seminorm)
                    .with("seminorm-refined", b.seminorm)
                    .with("sup-abs", a.sup_abs)
                    .with("sup-abs-refined", b.sup_abs),
            );
        }
        (Err(e), _) | (_, Err(e)) => checks.push(Check::failed("bloch-estimates-stable", "unbounded-bloch", &e)),
    }
    checks
}

/// Largest residual over the nodes of a least-squares Chebyshev fit of
/// degree `d` to `S_1(|x|)` at 40 Chebyshev nodes of `[-1, 1]`.
pub fn chebyshev_fit_residual(n: usize, d: usize) -> Result<f64> {
    const NODES: usize = 40;
    let xs: Vec<f64> = (0..NODES).map(|k| ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * NODES) as f64).cos()).collect();
    let ys = DVector::from_iterator(NODES, xs.iter().map(|x| s_factor(n, 1, x.abs())).collect::<Result<Vec<f64>>>()?);
    let a = DMatrix::from_fn(NODES, d + 1, |i, j| (j as f64 * xs[i].acos()).cos());
    let c = a
        .clone()
        .svd(true, true)
        .solve(&ys, 1e-15)
        .map_err(|e| Error::Precision(format!("least squares: {e}")))?;
    Ok(max_abs((&a * c - &ys).iter().cloned()))
}

pub(super) fn odd_dim_witness(cfg: &SuiteConfig) -> Vec<Check> {
    let _ = cfg;
    vec![
        guard("odd-dimension-not-polynomial", "no-polynomial-harmonics", || {
            let mut smallest = f64::INFINITY;
            for d in 0..=30 {
                smallest = smallest.min(chebyshev_fit_residual(3, d)?);
            }
            Ok(Check::new("odd-dimension-not-polynomial", "no-polynomial-harmonics", smallest, Relation::Above, 1e-6))
        }),
        guard("even-dimension-polynomial", "even-dimension-polynomial", || {
            let res = chebyshev_fit_residual(4, 2)?;
            Ok(Check::new("even-dimension-polynomial", "even-dimension-polynomial", res, Relation::Below, cfg.tol(1e-12)))
        }),
    ]
}

/// The recursive membership rule evaluated by scanning every center.
pub fn brute_index(l: &Lattice, x: &[f64]) -> Option<usize> {
    let half = l.r / 2.0;
    let d: Vec<f64> = (0..l.len()).map(|m| rho_unchecked(x, l.center(m))).collect();
    (0..l.len()).find(|&m| d[m] < l.r && !(m + 1..l.len()).any(|k| d[k] < half))
}

/// `sum_m (1-|a_m|^2)^p`.
pub fn weight_sum(l: &Lattice, p: f64) -> f64 {
    (0..l.len()).map(|m| (1.0 - norm_sq(l.center(m))).powf(p)).sum()
}

/// Bounds for `nu_beta(E_m) / (1-|a_m|^2)^{beta+n}` implied by
/// `E_{r/2}(a) subset E_m subset E_r(a)`.
pub fn measure_ratio_bounds(n: usize, r: f64, beta: f64) -> (f64, f64) {
    let h = r / 2.0;
    let p = 2.0 * (beta + n as f64);
    let w = |s: f64| if beta >= 0.0 { (1.0 - s * s).powf(beta) } else { 1.0 };
    let w_hi = |s: f64| if beta >= 0.0 { 1.0 } else { (1.0 - s * s).powf(beta) };
    (h.powi(n as i32) * w(h) * (1.0 + h).powf(-p), r.powi(n as i32) * w_hi(r) * (1.0 - r).powf(-p))
}

pub(super) fn lattice(cfg: &SuiteConfig, artifacts: &mut Artifacts) -> Vec<Check> {
    let n = cfg.n;
    let l = match build_lattice(n, cfg.r, cfg.r_max, cfg.seed) {
        Ok(l) => Arc::new(l),
        Err(e) => return vec![Check::failed("lattice-construction", "lattice", &e)],
    };
    artifacts.lattice_text = Some(lattice_to_text(&l));
    let r = l.r;
    let mut checks = Vec::new();
    let sep = (0..l.len())
        .into_par_iter()
        .map(|m| {
            let mut best: f64 = 1.0;
            l.near(l.center(m), (2.0 * r).min(0.99), |k, d| {
                if k != m {
                    best = best.min(d);
                }
            });
            best
        })
        .reduce(|| 1.0, f64::min);
    checks.push(Check::new("separation", "lattice", sep, Relation::AtLeast, r).with("centers", l.len() as f64));
    if let Some(a) = &l.audit {
        checks.push(
            Check::new("covering-audit", "lattice", a.max_min_rho, Relation::Below, r).with("rounds", a.rounds as f64),
        );
    }
    let mut rng = stream(cfg, 6);
    let pts = sample_points(&mut rng, n, cfg.r_max, cfg.samples);
    let cover = pts
        .par_iter()
        .map(|x| l.nearest_within(x, (2.0 * r).min(0.99)).map(|(_, d)| d).unwrap_or(1.0))
        .reduce(|| 0.0, f64::max);
    checks.push(Check::new("covering-fresh-samples", "lattice", cover, Relation::Below, r));

    let p = Partition::new(l.clone());
    let brute_pts = &pts[..(cfg.samples / 10).max(1).min(pts.len())];
    let (mismatch, outside, half_miss) = brute_pts
        .par_iter()
        .map(|x| {
            let got = p.index(x).ok();
            let want = brute_index(&l, x);
            let mut c = (0usize, 0usize, 0usize);
            if got != want {
                c.0 += 1;
            }
            if let Some(m) = got {
                if rho_unchecked(x, l.center(m)) >= r {
                    c.1 += 1;
                }
            }
            if let Some((m, d)) = l.nearest_within(x, r / 2.0) {
                if d < r / 2.0 && got != Some(m) {
                    c.2 += 1;
                }
            }
            c
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    checks.push(Check::new("partition-matches-recursive-rule", "partition", mismatch as f64, Relation::AtMost, 0.0));
    checks.push(Check::new("partition-inside-r-ball", "partition", outside as f64, Relation::AtMost, 0.0));
    checks.push(Check::new("partition-contains-half-ball", "partition", half_miss as f64, Relation::AtMost, 0.0));

    let (lo, hi) = ((1.0 - r) / (1.0 + r), (1.0 + r) / (1.0 - r));
    let mut bad = 0usize;
    for _ in 0..cfg.samples {
        let m = rng.random_range(0..l.len());
        let a = l.center(m);
        let e = pseudo_ball_unchecked(a, r);
        let u = uniform_in_ball(&mut rng, n, 1.0);
        let y: Vec<f64> = e.center.iter().zip(&u).map(|(c, v)| c + e.radius * v).collect();
        let q = (1.0 - norm_sq(&y)) / (1.0 - norm_sq(a));
        if rho_unchecked(&y, a) < r && !(lo <= q && q <= hi) {
            bad += 1;
        }
    }
    checks.push(Check::new("weight-ratio-on-r-balls", "ratio-bracket", bad as f64, Relation::AtMost, 0.0));

    let beta = cfg.alpha + cfg.t;
    match p.measures(beta) {
        Ok(ms) => {
            let total: f64 = ms.iter().map(|m| m.value).sum();
            let se = ms.iter().map(|m| m.std_err * m.std_err).sum::<f64>().sqrt();
            let (mc, mc_se) = union_measure(&l, beta, 200_000, cfg.seed);
            let z = (total - mc).abs() / (se * se + mc_se * mc_se).sqrt();
            checks.push(
                Check::new("measures-sum-to-union", "partition-measure", z, Relation::Below, 4.0)
                    .with("sum", total)
                    .with("union-monte-carlo", mc),
            );
            let (blo, bhi) = measure_ratio_bounds(n, r, beta);
            let mut out_of = 0usize;
            let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
            for (m, e) in ms.iter().enumerate() {
                let q = e.value / (1.0 - norm_sq(l.center(m))).powf(beta + n as f64);
                let slack = 4.0 * e.std_err / e.value;
                if q < blo * (1.0 - slack) || q > bhi * (1.0 + slack) {
                    out_of += 1;
                }
                rmin = rmin.min(q);
                rmax = rmax.max(q);
            }
            checks.push(
                Check::new("measure-ratio-bracket", "partition-measure", out_of as f64, Relation::AtMost, 0.0)
                    .with("min-ratio", rmin)
                    .with("max-ratio", rmax)
                    .with("lower-bound", blo)
                    .with("upper-bound", bhi),
            );
        }
        Err(e) => checks.push(Check::failed("partition-measures", "partition-measure", &e)),
    }

    checks.push(guard("weight-sum-refinement", "lattice-weight-sum", || {
        let p = cfg.alpha + n as f64;
        let r_sep = r.max(0.2);
        let r_hi = 1.0 - (1.0 - cfg.r_max) / 2.0;
        let small = build_lattice(n, r_sep, cfg.r_max, cfg.seed)?;
        let large = build_lattice(n, r_sep, r_hi, cfg.seed)?;
        let (s0, s1) = (weight_sum(&small, p), weight_sum(&large, p));
        let shell = r_hi.powi(n as i32) - cfg.r_max.powi(n as i32);
        let allowed = 2.0 * shell / (1.0 - cfg.r_max.powi(n as i32) + shell);
        Ok(Check::new("weight-sum-refinement", "lattice-weight-sum", (s1 - s0) / s1, Relation::AtMost, allowed)
            .with("sum", s0)
            .with("sum-refined", s1))
    }));
    checks
}

/// Monte Carlo `nu_beta` of the union of the r-balls around all centers.
pub fn union_measure(l: &Lattice, beta: f64, samples: usize, seed: u64) -> (f64, f64) {
    let n = l.n;
    let r = l.r;
    let outer = ((l.r_max + r) / (1.0 + r * l.r_max)).min(1.0);
    let vol = outer.powi(n as i32);
    let chunks = 64;
    let per = samples.div_ceil(chunks);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0C0E_0000 ^ c as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..per {
                let y = uniform_in_ball(&mut rng, n, outer);
                let w = if l.nearest_within(&y, r).is_some() { (1.0 - norm_sq(&y)).powf(beta) } else { 0.0 };
                s += w;
                s2 += w * w;
            }
            (s, s2)
        })
        .collect();
    let total = (chunks * per) as f64;
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s / total;
    let var = (s2 / total - mean * mean).max(0.0);
    (vol * mean, vol * (var / total).sqrt())
}

pub(super) fn atomic(cfg: &SuiteConfig, artifacts: &mut Artifacts) -> Vec<Check> {
    let mut run = || -> Result<Vec<Check>> {
        let l = Arc::new(build_lattice(cfg.n, cfg.r, cfg.r_max, cfg.seed)?);
        artifacts.lattice_text = Some(lattice_to_text(&l));
        let mut acfg = AtomicConfig::new(cfg.alpha, cfg.t, Normalization::KernelBlochNorm);
        acfg.max_iterations = cfg.iterations;
        let system = AtomicSystem::new(Arc::new(Partition::new(l.clone())), acfg)?;
        let set = standard_test_set(cfg.n, cfg.alpha, cfg.seed)?;
        let jobs: Vec<(&ZonalExpansion, Normalization)> = set
            .iter()
            .flat_map(|f| [(f, Normalization::KernelBlochNorm), (f, Normalization::WeightPower)])
            .collect();
        let runs = system.run_batch(&jobs)?;
        let report = system.report(runs);
        let checks = atomic_checks(&report, cfg.tol_scale, &l);
        artifacts.decomposition = Some(report);
        Ok(checks)
    };
    run().unwrap_or_else(|e| vec![Check::failed("atomic-decomposition", "atomic-decomposition", &e)])
}

/// Criteria on a batch run holding each test function under both
/// normalizations, in pairs.
pub fn atomic_checks(report: &crate::atomic::AtomicReport, tol_scale: f64, l: &Lattice) -> Vec<Check> {
    let est = report.contraction.unwrap_or(f64::NAN);
    let runs = &report.runs;
    let excess = runs.iter().map(|d| d.worst_ratio() - est).fold(f64::NEG_INFINITY, f64::max);
    let recon = runs.iter().map(|d| d.reconstruction_error).fold(0.0, f64::max);
    let mut checks = vec![
        Check::new("contraction-estimate", "contraction", est, Relation::Below, 0.8),
        Check::new("geometric-decay", "neumann-series", excess, Relation::AtMost, 0.1)
            .with("converged-runs", runs.iter().filter(|d| d.converged).count() as f64)
            .with("runs", runs.len() as f64),
        Check::new("reconstruction-error", "atomic-decomposition", recon, Relation::Below, 1e-3 * tol_scale),
    ];
    for (mode, lo, hi) in &report.brackets {
        checks.push(
            Check::new(&format!("coefficient-bracket-{mode:?}"), "coefficient-bound", hi / lo, Relation::AtMost, 25.0)
                .with("min", *lo)
                .with("max", *hi),
        );
    }
    let mut agree: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for pair in runs.chunks(2) {
        if let [a, b] = pair {
            let sup = a.reconstruction.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let diff = a.reconstruction.iter().zip(&b.reconstruction).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            agree = agree.max(diff / sup);
        }
        let a = &pair[0];
        let s = a.lambda.sup_norm();
        if s > 0.0 {
            tail = tail.max(a.lambda.tail_sup(l, 0.9) / s);
        }
    }
    checks.push(Check::new("normalizations-agree", "atomic-normalizations", agree, Relation::Below, 1e-3 * tol_scale));
    checks.push(Check::new("little-bloch-tail", "little-bloch-coefficients", tail, Relation::Below, 0.1));
    checks
}
