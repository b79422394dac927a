//! Gauss hypergeometric series, the radial factors `S_m(r)`, zonal harmonics
//! and `dim H_m`.

use crate::error::{Error, Result};
use statrs::function::gamma::{digamma, ln_gamma};
use std::f64::consts::PI;

const SERIES_EPS: f64 = 1e-16;
const SERIES_CAP: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeometricParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

fn nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// `(ln|Gamma(x)|, sign Gamma(x))`; `None` at the poles.
pub fn ln_gamma_signed(x: f64) -> Option<(f64, f64)> {
    if nonpositive_integer(x) {
        return None;
    }
    if x > 0.0 {
        return Some((ln_gamma(x), 1.0));
    }
    let s = (PI * x).sin();
    Some((PI.ln() - s.abs().ln() - ln_gamma(1.0 - x), s.signum()))
}

/// `prod Gamma(num) / prod Gamma(den)`, zero when a denominator argument is a pole.
fn gamma_ratio(num: &[f64], den: &[f64]) -> Result<f64> {
    let mut lg = 0.0;
    let mut sign = 1.0;
    for &x in den {
        match ln_gamma_signed(x) {
            None => return Ok(0.0),
            Some((l, s)) => {
                lg -= l;
                sign *= s;
            }
        }
    }
    for &x in num {
        match ln_gamma_signed(x) {
            None => return Err(Error::Domain(format!("Gamma pole at {x}"))),
            Some((l, s)) => {
                lg += l;
                sign *= s;
            }
        }
    }
    Ok(sign * lg.exp())
}

fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut small = 0;
    let mut k = 0usize;
    while small < 3 {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        k += 1;
        if term.abs() < SERIES_EPS * sum.abs() {
            small += 1;
        } else {
            small = 0;
        }
        if k > SERIES_CAP {
            return Err(Error::Precision(format!(
                "2F1({a},{b};{c};{z}) series did not settle after {SERIES_CAP} terms"
            )));
        }
    }
    Ok(sum)
}

fn terminating(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let stop = if nonpositive_integer(a) { -a } else { -b } as usize;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 0..stop {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
    }
    sum
}

/// Expansion about `z = 1` for `c = a + b + N`, `N` a positive integer.
fn log_case(a: f64, b: f64, nn: usize, z: f64) -> Result<f64> {
    let c = a + b + nn as f64;
    let w = 1.0 - z;
    let mut first = 0.0;
    let mut term = 1.0;
    for k in 0..nn {
        let kf = k as f64;
        first += term;
        term *= (a + kf) * (b + kf) / ((kf + 1.0) * (1.0 - nn as f64 + kf)) * w;
    }
    first *= gamma_ratio(&[nn as f64, c], &[a + nn as f64, b + nn as f64])?;

    let pref = gamma_ratio(&[c], &[a, b])?;
    if pref == 0.0 {
        return Ok(first);
    }
    let lw = w.ln();
    let nf = nn as f64;
    let mut psi1 = digamma(1.0);
    let mut psi2 = digamma(nf + 1.0);
    let mut psi3 = digamma(a + nf);
    let mut psi4 = digamma(b + nf);
    // coefficient (a+N)_k (b+N)_k / (k! (k+N)!) w^k
    let mut coef = 1.0 / ln_gamma(nf + 1.0).exp();
    let mut sum = 0.0;
    let mut small = 0;
    let mut k = 0usize;
    while small < 3 {
        let kf = k as f64;
        let t = coef * (lw - psi1 - psi2 + psi3 + psi4);
        sum += t;
        if t.abs() < SERIES_EPS * sum.abs() || coef == 0.0 {
            small += 1;
        } else {
            small = 0;
        }
        coef *= (a + nf + kf) * (b + nf + kf) / ((kf + 1.0) * (kf + nf + 1.0)) * w;
        psi1 += 1.0 / (kf + 1.0);
        psi2 += 1.0 / (kf + nf + 1.0);
        psi3 += 1.0 / (a + kf + nf);
        psi4 += 1.0 / (b + kf + nf);
        k += 1;
        if k > SERIES_CAP {
            return Err(Error::Precision("2F1 expansion about z = 1 did not settle".into()));
        }
    }
    let sign = if nn % 2 == 0 { 1.0 } else { -1.0 };
    Ok(first - sign * w.powi(nn as i32) * pref * sum)
}

/// Gauss hypergeometric function `F(a,b;c;z)` for real parameters and
/// `z` in `[-1,1]`.
pub fn gauss_2f1(p: HypergeometricParams) -> Result<f64> {
    let HypergeometricParams { a, b, c, z } = p;
    if ![a, b, c, z].iter().all(|v| v.is_finite()) {
        return Err(Error::Input("non-finite hypergeometric parameter".into()));
    }
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("z = {z} outside [-1,1]")));
    }
    let terminates = nonpositive_integer(a) || nonpositive_integer(b);
    if nonpositive_integer(c) {
        let stop = if nonpositive_integer(a) { -a } else if nonpositive_integer(b) { -b } else { f64::INFINITY };
        if !(stop < -c + 1.0) {
            return Err(Error::Domain(format!("c = {c} is a nonpositive integer")));
        }
    }
    if terminates {
        return Ok(terminating(a, b, c, z));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let s = c - a - b;
    if z == 1.0 {
        if s <= 0.0 {
            return Err(Error::Domain(format!("series diverges at z = 1 (c-a-b = {s})")));
        }
        return gamma_ratio(&[c, s], &[c - a, c - b]);
    }
    if z < -0.5 {
        if z == -1.0 && s <= -1.0 {
            return Err(Error::Domain(format!("series diverges at z = -1 (c-a-b = {s})")));
        }
        let inner = gauss_2f1(HypergeometricParams { a, b: c - b, c, z: z / (z - 1.0) })?;
        return Ok((1.0 - z).powf(-a) * inner);
    }
    if z > 0.5 && s > 0.0 && s == s.round() {
        let w = 1.0 - z;
        if w * (a.abs() + b.abs() + 1.0) <= 2.0 {
            return log_case(a, b, s as usize, z);
        }
    }
    series(a, b, c, z)
}

fn f21(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    gauss_2f1(HypergeometricParams { a, b, c, z })
}

/// `F(m, 1-n/2; m+n/2; 1)`.
pub fn s_normalizer(n: usize, m: usize) -> f64 {
    normalizers(n, m)[m]
}

/// `F(k, 1-n/2; k+n/2; 1)` for `k = 0..=m`. For odd `n` this is the Gauss sum
/// `Gamma(k+n/2) Gamma(n-1) / (Gamma(n/2) Gamma(k+n-1))`, accumulated as a
/// product of consecutive ratios.
fn normalizers(n: usize, m: usize) -> Vec<f64> {
    let h = n as f64 / 2.0;
    if n % 2 == 0 {
        return (0..=m).map(|k| terminating(k as f64, 1.0 - h, k as f64 + h, 1.0)).collect();
    }
    let mut out = Vec::with_capacity(m + 1);
    let mut v = 1.0;
    for k in 0..=m {
        out.push(v);
        v *= (k as f64 + h) / (k as f64 + n as f64 - 1.0);
    }
    out
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Input(format!("dimension {n} < 2")));
    }
    Ok(())
}

fn check_r(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Input(format!("radius {r} outside [0,1]")));
    }
    Ok(())
}

/// `S_m(r) = F(m, 1-n/2; m+n/2; r^2) / F(m, 1-n/2; m+n/2; 1)`.
pub fn s_factor(n: usize, m: usize, r: f64) -> Result<f64> {
    check_n(n)?;
    check_r(r)?;
    s_factor_with(n, m, r, s_normalizer(n, m))
}

fn s_factor_with(n: usize, m: usize, r: f64, norm: f64) -> Result<f64> {
    if m == 0 || n == 2 || r == 1.0 {
        return Ok(1.0);
    }
    let h = n as f64 / 2.0;
    let mf = m as f64;
    Ok(f21(mf, 1.0 - h, mf + h, r * r)? / norm)
}

/// `dS_m/dr = 2r (ab/c) F(a+1, b+1; c+1; r^2) / F(a,b;c;1)`.
pub fn s_factor_derivative(n: usize, m: usize, r: f64) -> Result<f64> {
    check_n(n)?;
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Input(format!("radius {r} outside [0,1)")));
    }
    s_derivative_with(n, m, r, s_normalizer(n, m))
}

fn s_derivative_with(n: usize, m: usize, r: f64, norm: f64) -> Result<f64> {
    if m == 0 || n == 2 || r == 0.0 {
        return Ok(0.0);
    }
    let h = n as f64 / 2.0;
    let (a, b, c) = (m as f64, 1.0 - h, m as f64 + h);
    Ok(2.0 * r * a * b / c * f21(a + 1.0, b + 1.0, c + 1.0, r * r)? / norm)
}

/// Evaluates `S_m` for a fixed dimension with normalizers precomputed up to
/// `max_degree`.
#[derive(Debug, Clone)]
pub struct SmEvaluator {
    n: usize,
    norms: Vec<f64>,
}

impl SmEvaluator {
    pub fn new(n: usize, max_degree: usize) -> Result<Self> {
        check_n(n)?;
        Ok(SmEvaluator {
            n,
            norms: normalizers(n, max_degree),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.norms.len() - 1
    }

    fn norm(&self, m: usize) -> f64 {
        self.norms.get(m).copied().unwrap_or_else(|| s_normalizer(self.n, m))
    }

    fn norms_upto(&self, m: usize) -> std::borrow::Cow<'_, [f64]> {
        if m < self.norms.len() {
            std::borrow::Cow::Borrowed(&self.norms[..=m])
        } else {
            std::borrow::Cow::Owned(normalizers(self.n, m))
        }
    }

    pub fn value(&self, m: usize, r: f64) -> Result<f64> {
        check_r(r)?;
        s_factor_with(self.n, m, r, self.norm(m))
    }

    pub fn derivative(&self, m: usize, r: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Input(format!("radius {r} outside [0,1)")));
        }
        s_derivative_with(self.n, m, r, self.norm(m))
    }

    /// `S_0(r), ..., S_M(r)`.
    pub fn profile(&self, r: f64, max_degree: usize) -> Result<Vec<f64>> {
        check_r(r)?;
        if self.n % 2 == 0 || r == 0.0 || r == 1.0 || max_degree < 2 {
            return (0..=max_degree).map(|m| s_factor_with(self.n, m, r, self.norm(m))).collect();
        }
        let y = odd_f_profile(self.n, max_degree + 1, r * r)?;
        let norms = self.norms_upto(max_degree);
        Ok((0..=max_degree)
            .map(|m| if m == 0 { 1.0 } else { y[m] / norms[m] })
            .collect())
    }

    /// `S_0'(r), ..., S_M'(r)`.
    pub fn derivative_profile(&self, r: f64, max_degree: usize) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Input(format!("radius {r} outside [0,1)")));
        }
        if self.n % 2 == 0 || r == 0.0 || max_degree < 2 {
            return (0..=max_degree).map(|m| s_derivative_with(self.n, m, r, self.norm(m))).collect();
        }
        let z = r * r;
        let w = 1.0 - z;
        let y = odd_f_profile(self.n, max_degree + 1, z)?;
        let h = self.n as f64 / 2.0;
        let b = 1.0 - h;
        let norms = self.norms_upto(max_degree);
        let mut out = vec![0.0; max_degree + 1];
        for m in 1..=max_degree {
            let (a, c) = (m as f64, m as f64 + h);
            out[m] = if a / w < 1e7 {
                // F(a+1,b;c+1) = c/(c-b) F + c(1-z)/(a(b-c)) F'
                let m00 = c / (c - b);
                let m01 = c * w / (a * (b - c));
                2.0 * r * (y[m + 1] - m00 * y[m]) / m01 / norms[m]
            } else {
                s_derivative_with(self.n, m, r, norms[m])?
            };
        }
        Ok(out)
    }
}

const SEGMENT: usize = 128;

/// `F(m, 1-n/2; m+n/2; z)` for `m = 0..=top`, odd `n`. Degrees where the
/// expansion about `z = 1` applies are evaluated directly; the rest by
/// backward recurrence in `m` over short segments, each seeded with two
/// series values.
fn odd_f_profile(n: usize, top: usize, z: f64) -> Result<Vec<f64>> {
    let h = n as f64 / 2.0;
    let b = 1.0 - h;
    let mut y = vec![0.0; top + 1];
    let direct_upto = if z > 0.5 {
        ((2.0 / (1.0 - z) - b.abs() - 1.0).floor().max(0.0) as usize).min(top)
    } else {
        0
    }
    .max(4.min(top));
    y[0] = 1.0;
    for m in 1..=direct_upto {
        y[m] = f21(m as f64, b, m as f64 + h, z)?;
    }
    let mut hi = top;
    while hi > direct_upto {
        let lo = hi.saturating_sub(SEGMENT - 1).max(direct_upto + 1);
        y[hi] = f21(hi as f64, b, hi as f64 + h, z)?;
        if hi > lo {
            y[hi - 1] = f21(hi as f64 - 1.0, b, hi as f64 - 1.0 + h, z)?;
        }
        let mut m = hi - 1;
        while m > lo {
            let (a, c) = (m as f64, m as f64 + h);
            y[m - 1] = ((a * z - b * z + c - 1.0) * y[m] + a * z * (b - c) / c * y[m + 1]) / (c - 1.0);
            m -= 1;
        }
        hi = lo - 1;
    }
    Ok(y)
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Dimension of the space of degree-`m` harmonic polynomials on `R^n`.
pub fn dim_hm(n: usize, m: usize) -> u64 {
    let (n, m) = (n as u64, m as u64);
    if m == 0 {
        return 1;
    }
    let total = binomial(n + m - 1, n - 1);
    let lower = if m >= 2 { binomial(n + m - 3, n - 1) } else { 0 };
    (total - lower) as u64
}

/// `Z_m(zeta, eta)` on the sphere as a function of the cosine `t`, for all
/// degrees `0..=max_degree`.
pub fn zonal_profile(n: usize, max_degree: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_degree + 1];
    zonal_profile_into(n, t, &mut out);
    out
}

pub fn zonal_profile_into(n: usize, t: f64, out: &mut [f64]) {
    let t = t.clamp(-1.0, 1.0);
    let len = out.len();
    if len == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 2 {
        // 2 T_m(t)
        let (mut prev, mut cur) = (1.0, t);
        for m in 1..len {
            out[m] = 2.0 * cur;
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
        }
        return;
    }
    let c = recurrence(n);
    if len > c.scale.len() {
        return zonal_profile_slow(n, t, out);
    }
    let (mut prev, mut cur) = (1.0, c.a[0] * t);
    for m in 1..len {
        out[m] = c.scale[m] * cur;
        let next = c.a[m] * t * cur - c.b[m] * prev;
        prev = cur;
        cur = next;
    }
}

fn zonal_profile_slow(n: usize, t: f64, out: &mut [f64]) {
    let lam = n as f64 / 2.0 - 1.0;
    let (mut prev, mut cur) = (1.0, 2.0 * lam * t);
    for m in 1..out.len() {
        let mf = m as f64;
        out[m] = (2.0 * mf + n as f64 - 2.0) / (n as f64 - 2.0) * cur;
        let next = (2.0 * t * (mf + lam) * cur - (mf + 2.0 * lam - 1.0) * prev) / (mf + 1.0);
        prev = cur;
        cur = next;
    }
}

const RECURRENCE_LEN: usize = 1 << 16;

/// Division-free Gegenbauer recurrence coefficients for `lambda = n/2 - 1`
/// (`a`, `b`) and `lambda + 1` (`da`, `db`), with `scale[m] = (2m+n-2)/(n-2)`.
struct Recurrence {
    a: Vec<f64>,
    b: Vec<f64>,
    da: Vec<f64>,
    db: Vec<f64>,
    scale: Vec<f64>,
}

fn recurrence(n: usize) -> &'static Recurrence {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static REG: OnceLock<Mutex<HashMap<usize, &'static Recurrence>>> = OnceLock::new();
    let mut g = REG.get_or_init(|| Mutex::new(HashMap::new())).lock().unwrap();
    g.entry(n).or_insert_with(|| {
        let lam = n as f64 / 2.0 - 1.0;
        let mu = lam + 1.0;
        let mut r = Recurrence {
            a: Vec::with_capacity(RECURRENCE_LEN),
            b: Vec::with_capacity(RECURRENCE_LEN),
            da: Vec::with_capacity(RECURRENCE_LEN),
            db: Vec::with_capacity(RECURRENCE_LEN),
            scale: Vec::with_capacity(RECURRENCE_LEN),
        };
        for m in 0..RECURRENCE_LEN {
            let mf = m as f64;
            r.a.push(2.0 * (mf + lam) / (mf + 1.0));
            r.b.push((mf + 2.0 * lam - 1.0) / (mf + 1.0));
            r.da.push(2.0 * (mf + mu) / (mf + 1.0));
            r.db.push((mf + 2.0 * mu - 1.0) / (mf + 1.0));
            r.scale.push((2.0 * mf + n as f64 - 2.0) / (n as f64 - 2.0));
        }
        Box::leak(Box::new(r))
    })
}

/// Derivatives in `t` of the profile returned by [`zonal_profile`].
pub fn zonal_profile_dt_into(n: usize, t: f64, out: &mut [f64]) {
    let t = t.clamp(-1.0, 1.0);
    let len = out.len();
    if len == 0 {
        return;
    }
    out[0] = 0.0;
    if n == 2 {
        // d/dt 2 T_m = 2 m U_{m-1}
        let (mut prev, mut cur) = (0.0, 1.0);
        for m in 1..len {
            out[m] = 2.0 * m as f64 * cur;
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
        }
        return;
    }
    // d/dt C_m^lam = 2 lam C_{m-1}^{lam+1}
    let lam = n as f64 / 2.0 - 1.0;
    let c = recurrence(n);
    if len > c.scale.len() {
        let mu = lam + 1.0;
        let (mut prev, mut cur) = (0.0, 1.0);
        for m in 1..len {
            let mf = m as f64;
            out[m] = (2.0 * mf + n as f64 - 2.0) / (n as f64 - 2.0) * 2.0 * lam * cur;
            let k = mf - 1.0;
            let next = (2.0 * t * (k + mu) * cur - (k + 2.0 * mu - 1.0) * prev) / (k + 1.0);
            prev = cur;
            cur = next;
        }
        return;
    }
    let (mut prev, mut cur) = (0.0, 1.0);
    for m in 1..len {
        out[m] = c.scale[m] * 2.0 * lam * cur;
        let next = c.da[m - 1] * t * cur - c.db[m - 1] * prev;
        prev = cur;
        cur = next;
    }
}

/// Zonal harmonic `Z_m(x, y)`, extended homogeneously of degree `m` in each
/// argument.
pub fn zonal(n: usize, m: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    check_n(n)?;
    if x.len() != n || y.len() != n {
        return Err(Error::Input(format!("points must have dimension {n}")));
    }
    if m == 0 {
        return Ok(1.0);
    }
    let (nx, ny) = (crate::geometry::norm(x), crate::geometry::norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Ok(0.0);
    }
    let t = crate::geometry::dot(x, y) / (nx * ny);
    let prof = zonal_profile(n, m, t);
    Ok((nx * ny).powi(m as i32) * prof[m])
}

/// Gradient in `x` of `Z_m(x, y)`.
pub fn zonal_gradient(n: usize, m: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_n(n)?;
    if x.len() != n || y.len() != n {
        return Err(Error::Input(format!("points must have dimension {n}")));
    }
    let mut g = vec![0.0; n];
    if m == 0 {
        return Ok(g);
    }
    let (nx, ny) = (crate::geometry::norm(x), crate::geometry::norm(y));
    if ny == 0.0 {
        return Ok(g);
    }
    if nx == 0.0 {
        if m == 1 {
            for i in 0..n {
                g[i] = n as f64 * y[i];
            }
        }
        return Ok(g);
    }
    let t = crate::geometry::dot(x, y) / (nx * ny);
    let p = zonal_profile(n, m, t)[m];
    let mut dp = vec![0.0; m + 1];
    zonal_profile_dt_into(n, t, &mut dp);
    let scale = nx.powi(m as i32 - 1) * ny.powi(m as i32);
    for i in 0..n {
        let xh = x[i] / nx;
        let yh = y[i] / ny;
        g[i] = scale * (m as f64 * p * xh + dp[m] * (yh - t * xh));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(a: f64, b: f64, c: f64, z: f64) -> f64 {
        gauss_2f1(HypergeometricParams { a, b, c, z }).unwrap()
    }

    #[test]
    fn hypergeometric_examples() {
        assert_eq!(f(3.0, 0.0, 2.5, 0.7), 1.0);
        assert!((f(1.0, 1.0, 2.0, 0.5) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((f(2.0, -1.0, 4.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(gauss_2f1(HypergeometricParams { a: 1.0, b: 1.0, c: 1.5, z: 1.0 }).is_err());
        assert!(gauss_2f1(HypergeometricParams { a: 1.0, b: 1.0, c: 2.0, z: 1.5 }).is_err());
    }

    #[test]
    fn pfaff_branch_matches_closed_form() {
        // F(1,1;2;z) = -log(1-z)/z
        for z in [-1.0, -0.9, -0.6] {
            let want = -(1.0f64 - z).ln() / z;
            assert!((f(1.0, 1.0, 2.0, z) - want).abs() < 1e-14, "z={z}");
        }
    }

    #[test]
    fn expansion_about_one_matches_direct_series() {
        for &(a, b, nn) in &[(1.0, -0.5, 2usize), (7.0, -0.5, 2), (30.0, 0.5, 1), (300.0, -0.5, 2), (3.0, -1.5, 4), (1.0, 1.0, 1)] {
            let c = a + b + nn as f64;
            for z in [0.6, 0.8, 0.9, 0.95, 0.995] {
                if (1.0 - z) * (a + b.abs() + 1.0) > 2.0 {
                    continue;
                }
                let direct = series(a, b, c, z).unwrap();
                let conn = log_case(a, b, nn, z).unwrap();
                assert!((direct - conn).abs() < 1e-12 * direct.abs().max(1.0), "a={a} b={b} z={z}: {direct} vs {conn}");
            }
        }
    }

    #[test]
    fn s_factor_examples() {
        for m in [0, 1, 5, 40] {
            assert_eq!(s_factor(2, m, 0.37).unwrap(), 1.0);
            assert_eq!(s_factor(3, m, 1.0).unwrap(), 1.0);
        }
        assert!((s_factor(4, 2, 0.5).unwrap() - 1.75).abs() < 1e-14);
        assert!(s_factor(3, 1, 1.01).is_err());
    }

    #[test]
    fn s_factor_derivative_examples() {
        assert_eq!(s_factor_derivative(3, 0, 0.4).unwrap(), 0.0);
        assert_eq!(s_factor_derivative(2, 6, 0.4).unwrap(), 0.0);
        assert!((s_factor_derivative(4, 2, 0.5).unwrap() + 1.0).abs() < 1e-14);
        for m in [1, 3, 12, 60] {
            for r in [0.2, 0.7, 0.95, 0.999] {
                let h = 1e-6;
                let fd = (s_factor(3, m, r + h).unwrap() - s_factor(3, m, r - h).unwrap()) / (2.0 * h);
                let d = s_factor_derivative(3, m, r).unwrap();
                assert!((fd - d).abs() < 1e-6 * d.abs().max(1e-3), "m={m} r={r}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn s_factor_is_continuous_near_the_sphere() {
        for m in [1, 10, 200] {
            let a = s_factor(3, m, 1.0 - 1e-9).unwrap();
            assert!((a - 1.0).abs() < 1e-5, "m={m}: {a}");
        }
    }

    // 40-digit reference values (n, m, r, S_m(r), S_m'(r))
    const REFERENCE: [(usize, usize, f64, f64, f64); 8] = [
        (3, 1, 0.5, 1.2640611752483765972, -0.2885301854859305089),
        (3, 7, 0.9, 1.4536973708217352602, -3.4405584934595647353),
        (3, 50, 0.99, 1.3632101313568486331, -29.824292729057046097),
        (3, 400, 0.999, 1.3032647748310634118, -255.04589342565262001),
        (3, 2000, 0.995, 4.1026561148547440557, -381.19828437547035957),
        (5, 30, 0.97, 2.0570993637115698785, -39.616069218080248416),
        (3, 3000, 0.5, 42.049692937871648856, -28.01445335937163236),
        (3, 1000, 0.9999, 1.0890089619958362164, -820.63536380541090643),
    ];

    #[test]
    fn s_factor_matches_reference_values() {
        for &(n, m, r, s, ds) in &REFERENCE {
            let v = s_factor(n, m, r).unwrap();
            assert!((v - s).abs() < 1e-12 * s, "n={n} m={m} r={r}: {v} vs {s}");
            let d = s_factor_derivative(n, m, r).unwrap();
            assert!((d - ds).abs() < 1e-10 * ds.abs(), "n={n} m={m} r={r}: {d} vs {ds}");
        }
    }

    #[test]
    fn profiles_match_reference_values() {
        for &(n, m, r, s, ds) in &REFERENCE {
            let ev = SmEvaluator::new(n, m + 5).unwrap();
            let p = ev.profile(r, m + 5).unwrap();
            assert!((p[m] - s).abs() < 1e-11 * s, "n={n} m={m} r={r}: {} vs {s}", p[m]);
            let d = ev.derivative_profile(r, m + 5).unwrap();
            assert!((d[m] - ds).abs() < 1e-8 * ds.abs(), "n={n} m={m} r={r}: {} vs {ds}", d[m]);
        }
    }

    #[test]
    fn profile_agrees_with_pointwise_evaluation() {
        for n in [3, 4, 5] {
            let ev = SmEvaluator::new(n, 300).unwrap();
            for r in [0.0, 0.1, 0.6, 0.93, 0.999, 1.0] {
                let p = ev.profile(r, 300).unwrap();
                for m in [0, 1, 2, 3, 17, 120, 299, 300] {
                    let v = s_factor(n, m, r).unwrap();
                    assert!((p[m] - v).abs() < 1e-12 * v, "n={n} r={r} m={m}: {} vs {v}", p[m]);
                }
            }
        }
    }

    #[test]
    fn dim_hm_examples() {
        assert_eq!(dim_hm(3, 0), 1);
        assert_eq!(dim_hm(5, 0), 1);
        assert_eq!(dim_hm(3, 5), 11);
        assert_eq!(dim_hm(2, 3), 2);
        assert_eq!(dim_hm(4, 3), 16);
    }

    #[test]
    fn zonal_examples() {
        let x = [0.3, -0.2, 0.1];
        assert_eq!(zonal(3, 2, &x, &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(zonal(3, 0, &x, &[0.0; 3]).unwrap(), 1.0);
        for n in 2..6 {
            let mut z = vec![0.0; n];
            z[1] = 1.0;
            for m in 0..20 {
                let d = zonal(n, m, &z, &z).unwrap();
                assert!((d - dim_hm(n, m) as f64).abs() < 1e-9 * d, "n={n} m={m}");
            }
        }
        let th = 0.7f64;
        let v = zonal(2, 5, &[1.0, 0.0], &[th.cos(), th.sin()]).unwrap();
        assert!((v - 2.0 * (5.0 * th).cos()).abs() < 1e-13);
    }

    #[test]
    fn first_zonal_is_scaled_inner_product() {
        let x = [0.3, -0.2, 0.4, 0.1];
        let y = [0.1, 0.5, -0.3, 0.2];
        let want = 4.0 * crate::geometry::dot(&x, &y);
        assert!((zonal(4, 1, &x, &y).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn zonal_gradient_matches_differences() {
        let y = [0.2, -0.5, 0.3];
        let x = [0.4, 0.1, -0.35];
        for m in 0..8 {
            let g = zonal_gradient(3, m, &x, &y).unwrap();
            for i in 0..3 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (zonal(3, m, &xp, &y).unwrap() - zonal(3, m, &xm, &y).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7, "m={m} i={i}");
            }
        }
        let g = zonal_gradient(3, 1, &[0.0; 3], &y).unwrap();
        for (gi, yi) in g.iter().zip(y) {
            assert!((gi - 3.0 * yi).abs() < 1e-15);
        }
    }
}
