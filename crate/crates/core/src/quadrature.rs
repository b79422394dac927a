//! Quadrature for the normalized surface measure on the sphere and the
//! weighted volume measures `dnu_alpha = (1-|x|^2)^alpha dnu` on the ball.

use crate::error::{Error, Result};
use crate::specialfn::SmEvaluator;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

pub const DEFAULT_RADIAL_NODES: usize = 128;
pub const DEFAULT_SPHERE_DEGREE: usize = 64;

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e[i]` couples `i` and `i+1`), by implicit QL.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    e.resize(n, 0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Precision("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(d)
}

/// `(P_N(x), P_{N-1}(x))` for Jacobi parameters `(a, b)`.
fn jacobi_pair(nn: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if nn == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
    for k in 2..=nn {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let num = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b) * p1
            - 2.0 * (k + a - 1.0) * (k + b - 1.0) * s * p0;
        let p2 = num / (2.0 * k * (k + a + b) * (s - 2.0));
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn jacobi_derivative(nn: usize, a: f64, b: f64, x: f64, p: f64, pm1: f64) -> f64 {
    let nf = nn as f64;
    let s = 2.0 * nf + a + b;
    (nf * ((a - b) - s * x) * p + 2.0 * (nf + a) * (nf + b) * pm1) / (s * (1.0 - x * x))
}

/// Gauss-Jacobi rule on `[-1,1]` for the weight `(1-x)^a (1+x)^b`.
pub fn gauss_jacobi(count: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if count == 0 {
        return Err(Error::Input("a quadrature rule needs at least one node".into()));
    }
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::Input(format!("Jacobi parameters ({a}, {b}) must exceed -1")));
    }
    let mut diag = Vec::with_capacity(count);
    let mut off = Vec::with_capacity(count);
    for k in 0..count {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        diag.push(if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        });
        if k + 1 < count {
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + a + b;
            let v = 4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0));
            off.push(v.sqrt());
        }
    }
    let mut x = tridiagonal_eigenvalues(diag, off)?;
    let mut w = Vec::with_capacity(count);
    for xi in x.iter_mut() {
        for _ in 0..4 {
            let (p, pm1) = jacobi_pair(count, a, b, *xi);
            let dp = jacobi_derivative(count, a, b, *xi, p, pm1);
            let step = p / dp;
            let next = (*xi - step).clamp(-1.0 + 1e-300, 1.0 - 1e-300);
            let done = step.abs() <= 1e-16 * xi.abs().max(1e-3);
            *xi = next;
            if done {
                break;
            }
        }
        let (p, pm1) = jacobi_pair(count, a, b, *xi);
        let dp = jacobi_derivative(count, a, b, *xi, p, pm1);
        w.push(1.0 / ((1.0 - *xi * *xi) * dp * dp));
    }
    // scale to the exact total mass 2^{a+b+1} B(a+1, b+1)
    let mass = ((a + b + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp();
    let total: f64 = w.iter().sum();
    for wi in w.iter_mut() {
        *wi *= mass / total;
    }
    Ok((x, w))
}

/// `int_0^1 n r^{n-1} (1-r^2)^alpha dr = (n/2) B(n/2, alpha+1)`.
pub fn radial_mass(n: usize, alpha: f64) -> f64 {
    let h = n as f64 / 2.0;
    h * (ln_gamma(h) + ln_gamma(alpha + 1.0) - ln_gamma(h + alpha + 1.0)).exp()
}

/// Gauss rule for `n r^{n-1} (1-r^2)^alpha dr` on `(0,1)`, built from a
/// Jacobi rule in `u = r^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialRule {
    pub n: usize,
    pub alpha: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn new(n: usize, alpha: f64, count: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input(format!("dimension {n} < 2")));
        }
        if !(alpha > -1.0) {
            return Err(Error::Input(format!("alpha = {alpha} must exceed -1")));
        }
        let b = n as f64 / 2.0 - 1.0;
        let (x, w) = gauss_jacobi(count, alpha, b)?;
        let scale = n as f64 / 2.0 * (-(alpha + b + 1.0) * 2f64.ln()).exp();
        Ok(RadialRule {
            n,
            alpha,
            nodes: x.iter().map(|xi| ((1.0 + xi) / 2.0).sqrt()).collect(),
            weights: w.iter().map(|wi| wi * scale).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * g(r)).sum()
    }
}

/// Product rule for the normalized surface measure on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub n: usize,
    /// Row-major `len x n` coordinates.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl SphereRule {
    /// Exact for spherical polynomials of degree `<= exact_degree`.
    pub fn new(n: usize, exact_degree: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input(format!("dimension {n} < 2")));
        }
        if n == 2 {
            let k = exact_degree + 1;
            let mut nodes = Vec::with_capacity(2 * k);
            for j in 0..k {
                let th = 2.0 * PI * j as f64 / k as f64;
                nodes.push(th.cos());
                nodes.push(th.sin());
            }
            return Ok(SphereRule { n, nodes, weights: vec![1.0 / k as f64; k], exact_degree });
        }
        let sub = SphereRule::new(n - 1, exact_degree)?;
        let p = (n as f64 - 3.0) / 2.0;
        let (t, mut wt) = gauss_jacobi(exact_degree / 2 + 1, p, p)?;
        let total: f64 = wt.iter().sum();
        wt.iter_mut().for_each(|w| *w /= total);
        let mut nodes = Vec::with_capacity(t.len() * sub.len() * n);
        let mut weights = Vec::with_capacity(t.len() * sub.len());
        for (ti, wi) in t.iter().zip(&wt) {
            let s = (1.0 - ti * ti).max(0.0).sqrt();
            for j in 0..sub.len() {
                nodes.push(*ti);
                nodes.extend(sub.node(j).iter().map(|c| s * c));
                weights.push(wi * sub.weights[j]);
            }
        }
        Ok(SphereRule { n, nodes, weights, exact_degree })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.n..(j + 1) * self.n]
    }
}

/// Polar product of a radial and a spherical rule, realizing `dnu_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallRule {
    pub radial: RadialRule,
    pub sphere: SphereRule,
}

impl BallRule {
    pub fn new(n: usize, alpha: f64, radial_nodes: usize, sphere_degree: usize) -> Result<Self> {
        Ok(BallRule {
            radial: RadialRule::new(n, alpha, radial_nodes)?,
            sphere: SphereRule::new(n, sphere_degree)?,
        })
    }

    pub fn with_defaults(n: usize, alpha: f64) -> Result<Self> {
        BallRule::new(n, alpha, DEFAULT_RADIAL_NODES, DEFAULT_SPHERE_DEGREE)
    }

    pub fn dim(&self) -> usize {
        self.radial.n
    }

    pub fn alpha(&self) -> f64 {
        self.radial.alpha
    }

    /// Node count; nodes are ordered radius-major.
    pub fn len(&self) -> usize {
        self.radial.len() * self.sphere.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_into(&self, k: usize, out: &mut [f64]) {
        let (i, j) = (k / self.sphere.len(), k % self.sphere.len());
        let r = self.radial.nodes[i];
        for (o, z) in out.iter_mut().zip(self.sphere.node(j)) {
            *o = r * z;
        }
    }

    pub fn weight(&self, k: usize) -> f64 {
        let (i, j) = (k / self.sphere.len(), k % self.sphere.len());
        self.radial.weights[i] * self.sphere.weights[j]
    }
}

/// `sum_j v_j f(zeta_j)`.
pub fn integrate_sphere(f: impl Fn(&[f64]) -> f64, rule: &SphereRule) -> Result<f64> {
    let mut acc = 0.0;
    for j in 0..rule.len() {
        let v = f(rule.node(j));
        if !v.is_finite() {
            return Err(Error::Evaluation { index: j });
        }
        acc += rule.weights[j] * v;
    }
    Ok(acc)
}

/// `sum_{i,j} w_i v_j f(r_i zeta_j)`, approximating `int f dnu_alpha`.
pub fn integrate_ball(f: impl Fn(&[f64]) -> f64, alpha: f64, rule: &BallRule) -> Result<f64> {
    if alpha != rule.alpha() {
        return Err(Error::Config(format!(
            "rule built for alpha = {} but integral requested for alpha = {alpha}",
            rule.alpha()
        )));
    }
    let mut x = vec![0.0; rule.dim()];
    let mut acc = 0.0;
    for k in 0..rule.len() {
        rule.node_into(k, &mut x);
        let v = f(&x);
        if !v.is_finite() {
            return Err(Error::Evaluation { index: k });
        }
        acc += rule.weight(k) * v;
    }
    Ok(acc)
}

fn cm_with_rule(rule: &RadialRule, ev: &SmEvaluator, m_max: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; m_max + 1];
    for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
        let s = ev.profile(r, m_max)?;
        let r2 = r * r;
        let mut pw = 1.0;
        for m in 0..=m_max {
            inv[m] += w * pw * s[m] * s[m];
            pw *= r2;
        }
    }
    Ok(inv.into_iter().map(|v| 1.0 / v).collect())
}

/// `c_0(alpha), ..., c_M(alpha)` with
/// `1/c_m = n int_0^1 r^{2m+n-1} S_m(r)^2 (1-r^2)^alpha dr`, checked by
/// doubling the radial node count.
pub fn cm_table(n: usize, alpha: f64, m_max: usize) -> Result<Vec<f64>> {
    let ev = SmEvaluator::new(n, m_max)?;
    let mut count = DEFAULT_RADIAL_NODES.max((m_max / 2 + 64).div_ceil(32) * 32);
    let mut prev = cm_with_rule(&RadialRule::new(n, alpha, count)?, &ev, m_max)?;
    let mut worst = 0.0;
    for _ in 0..3 {
        count *= 2;
        let next = cm_with_rule(&RadialRule::new(n, alpha, count)?, &ev, m_max)?;
        worst = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        if worst <= 1e-9 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Precision(format!(
        "c_m(alpha) for n = {n}, alpha = {alpha}, m <= {m_max}: node doubling still changes values by {worst:e}"
    )))
}

/// A single kernel coefficient `c_m(alpha)`.
pub fn cm_coefficient(n: usize, m: usize, alpha: f64) -> Result<f64> {
    Ok(cm_table(n, alpha, m)?[m])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::zonal;

    #[test]
    fn gauss_legendre_matches_known_nodes() {
        let (x, w) = gauss_jacobi(3, 0.0, 0.0).unwrap();
        let r = (0.6f64).sqrt();
        assert!((x[0] + r).abs() < 1e-15 && x[1].abs() < 1e-15 && (x[2] - r).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15 && (w[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_rule_integrates_polynomials_exactly() {
        // int (1-x)^a (1+x)^b x^k dx against a 1200-node Gauss-Legendre oracle
        // applied after factoring out nothing: use a = 2, b = 1 so the weight is polynomial.
        let (x, w) = gauss_jacobi(10, 2.0, 1.0).unwrap();
        let (xl, wl) = gauss_jacobi(40, 0.0, 0.0).unwrap();
        for k in 0..19 {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            let want: f64 = xl
                .iter()
                .zip(&wl)
                .map(|(t, v)| v * (1.0 - t).powi(2) * (1.0 + t) * t.powi(k))
                .sum();
            assert!((got - want).abs() < 1e-14, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn large_rules_have_correct_mass_and_ordering() {
        let (x, w) = gauss_jacobi(2048, 0.0, 0.5).unwrap();
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(w.iter().all(|&v| v > 0.0));
        let m1: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        // int (1+x)^{1/2} x dx on [-1,1] = 2^{3/2} (1/3 - 2/5) ... computed as 2^{5/2}(2/5) - 2^{3/2}(2/3)
        let want = 2f64.powf(2.5) * 0.4 - 2f64.powf(1.5) * 2.0 / 3.0;
        assert!((m1 - want).abs() < 1e-13, "{m1} vs {want}");
    }

    #[test]
    fn radial_rule_mass() {
        for n in [2, 3, 4] {
            for alpha in [0.0, 1.0, 2.5, -0.5] {
                let rule = RadialRule::new(n, alpha, 64).unwrap();
                let s: f64 = rule.weights.iter().sum();
                assert!((s - radial_mass(n, alpha)).abs() < 1e-13);
            }
        }
        assert!((radial_mass(3, 0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_rule_examples() {
        for n in [2, 3, 4] {
            let rule = SphereRule::new(n, 12).unwrap();
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            let eta: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
            let v = integrate_sphere(|z| zonal(n, 3, &eta, z).unwrap(), &rule).unwrap();
            assert!(v.abs() < 1e-12);
        }
        let rule = SphereRule::new(3, 8).unwrap();
        let eta = [0.0, 0.6, 0.8];
        let v = integrate_sphere(|z| zonal(3, 2, &eta, z).unwrap().powi(2), &rule).unwrap();
        assert!((v - 5.0).abs() < 1e-10);
    }

    #[test]
    fn ball_rule_measures() {
        let rule = BallRule::new(3, 0.0, 32, 4).unwrap();
        assert!((integrate_ball(|_| 1.0, 0.0, &rule).unwrap() - 1.0).abs() < 1e-12);
        assert!(integrate_ball(|_| 1.0, 1.0, &rule).is_err());
        let rule = BallRule::new(4, 1.5, 32, 4).unwrap();
        let want = 2.0 * (ln_gamma(2.0) + ln_gamma(2.5) - ln_gamma(4.5)).exp();
        assert!((integrate_ball(|_| 1.0, 1.5, &rule).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn integrate_reports_bad_nodes() {
        let rule = SphereRule::new(2, 3).unwrap();
        let err = integrate_sphere(|z| if z[1] > 0.5 { f64::NAN } else { 1.0 }, &rule).unwrap_err();
        assert_eq!(err, Error::Evaluation { index: 1 });
    }

    #[test]
    fn cm_examples() {
        assert!((cm_coefficient(2, 0, 0.0).unwrap() - 1.0).abs() < 1e-13);
        for n in [2, 3, 4] {
            for alpha in [0.0, 1.0, 2.0] {
                let c0 = cm_coefficient(n, 0, alpha).unwrap();
                assert!((c0 * radial_mass(n, alpha) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cm_even_dimension_closed_form() {
        // n = 4: S_m(r) = ((m+2) - m r^2)/2, so the radial integral is a Beta sum.
        let c = cm_table(4, 0.0, 30).unwrap();
        for m in [1usize, 5, 30] {
            let mf = m as f64;
            // 4 int r^{2m+3} ((m+2) - m r^2)^2 / 4 dr
            let p = 2.0 * mf + 4.0;
            let inv = (mf + 2.0).powi(2) / p - 2.0 * mf * (mf + 2.0) / (p + 2.0) + mf * mf / (p + 4.0);
            assert!((c[m] * inv - 1.0).abs() < 1e-12, "m={m}");
        }
    }
}
