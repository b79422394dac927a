//! Reproducing kernels `R_alpha(x,y) = sum_m c_m(alpha) S_m(|x|) S_m(|y|) Z_m(x,y)`
//! with a certified truncation rule, and the hyperbolic Poisson kernel.

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, norm_sq, Point};
use crate::quadrature::cm_table;
use crate::specialfn::{dim_hm, s_normalizer, zonal_profile_dt_into, zonal_profile_into, SmEvaluator};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub const DEFAULT_M_MAX: usize = 400;
/// Largest `|x||y|` accepted by the series evaluators.
pub const MAX_PRODUCT: f64 = 0.999;
const CACHE_FLOATS: usize = 40_000_000;

/// Cached `S_m(r)` and `S_m'(r)` profiles for one dimension, keyed by radius.
#[derive(Debug)]
pub struct ProfileCache {
    ev: SmEvaluator,
    values: Mutex<(usize, HashMap<u64, Arc<Vec<f64>>>)>,
    derivs: Mutex<(usize, HashMap<u64, Arc<Vec<f64>>>)>,
}

fn cached(
    slot: &Mutex<(usize, HashMap<u64, Arc<Vec<f64>>>)>,
    r: f64,
    len: usize,
    fill: impl FnOnce(usize) -> Result<Vec<f64>>,
) -> Result<Arc<Vec<f64>>> {
    {
        let guard = slot.lock().unwrap();
        if let Some(p) = guard.1.get(&r.to_bits()) {
            if p.len() >= len {
                return Ok(p.clone());
            }
        }
    }
    let p = Arc::new(fill(len.max(16) - 1)?);
    let mut guard = slot.lock().unwrap();
    if guard.0 + p.len() > CACHE_FLOATS {
        guard.1.clear();
        guard.0 = 0;
    }
    guard.0 += p.len();
    guard.1.insert(r.to_bits(), p.clone());
    Ok(p)
}

impl ProfileCache {
    fn new(n: usize) -> Result<Self> {
        Ok(ProfileCache {
            ev: SmEvaluator::new(n, 64)?,
            values: Mutex::new((0, HashMap::new())),
            derivs: Mutex::new((0, HashMap::new())),
        })
    }

    /// Process-wide cache for dimension `n`.
    pub fn shared(n: usize) -> Result<Arc<ProfileCache>> {
        static REG: OnceLock<Mutex<HashMap<usize, Arc<ProfileCache>>>> = OnceLock::new();
        let reg = REG.get_or_init(|| Mutex::new(HashMap::new()));
        let mut g = reg.lock().unwrap();
        if let Some(c) = g.get(&n) {
            return Ok(c.clone());
        }
        let c = Arc::new(ProfileCache::new(n)?);
        g.insert(n, c.clone());
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.ev.dim()
    }

    /// At least `S_0(r), ..., S_{len-1}(r)`.
    pub fn values(&self, r: f64, len: usize) -> Result<Arc<Vec<f64>>> {
        cached(&self.values, r, len, |m| self.ev.profile(r, m))
    }

    /// At least `S_0'(r), ..., S_{len-1}'(r)`.
    pub fn derivatives(&self, r: f64, len: usize) -> Result<Arc<Vec<f64>>> {
        cached(&self.derivs, r, len, |m| self.ev.derivative_profile(r, m))
    }
}

/// Upper bound for `sum_{m>M} m^p q^m`, or infinity when the closed form does not apply.
pub fn power_tail(p: f64, q: f64, big_m: usize) -> f64 {
    let m1 = big_m as f64 + 1.0;
    let ratio = ((m1 + 1.0) / m1).powf(p) * q;
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    m1.powf(p) * q.powf(m1) / (1.0 - ratio)
}

/// Smallest `M` with `scale * sum_{m>M} m^p q^m < tol`, searched up to `cap`.
fn degree_for(scale: f64, p: f64, q: f64, tol: f64, cap: usize) -> Option<usize> {
    if q == 0.0 {
        return Some(0);
    }
    // the bound is decreasing once m q^{1/p}... simply scan
    let mut m = 0usize;
    while m <= cap {
        if scale * power_tail(p, q, m) < tol {
            return Some(m);
        }
        m += if m < 64 { 1 } else { 1 + m / 64 };
    }
    None
}

/// Constants for `S_m <= C_S m^{n/2-1}` and `dim H_m <= C_Z m^{n-2}` measured over `1..=m_max`.
fn sz_constants(n: usize, m_max: usize) -> (f64, f64) {
    let ev_norm = |m: usize| 1.0 / s_normalizer(n, m);
    let mut c_s: f64 = 1.0;
    let mut c_z: f64 = 1.0;
    let mut norm = 1.0;
    let h = n as f64 / 2.0;
    for m in 1..=m_max.max(1) {
        let mf = m as f64;
        if n % 2 == 1 {
            norm *= (mf - 1.0 + h) / (mf - 1.0 + n as f64 - 1.0);
            c_s = c_s.max(1.0 / norm / mf.powf(h - 1.0));
        } else if m <= 2000 || m == m_max {
            c_s = c_s.max(ev_norm(m) / mf.powf(h - 1.0));
        }
        c_z = c_z.max(dim_hm(n, m) as f64 / mf.powi(n as i32 - 2));
    }
    (c_s, c_z)
}

/// Coefficients `c_m(alpha)`, `m <= M_max`, and the empirical tail constants.
#[derive(Debug)]
pub struct KernelTable {
    pub n: usize,
    pub alpha: f64,
    pub m_max: usize,
    pub coeffs: Vec<f64>,
    pub c_c: f64,
    pub c_s: f64,
    pub c_z: f64,
    profiles: Arc<ProfileCache>,
}

/// A kernel evaluation request.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelValueRequest {
    pub x: Point,
    pub y: Point,
    pub tolerance: f64,
}

impl KernelTable {
    pub fn new(n: usize, alpha: f64, m_max: usize) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::Input(format!("alpha = {alpha} must exceed -1")));
        }
        if m_max < 1 {
            return Err(Error::Input("M_max must be at least 1".into()));
        }
        let coeffs = cm_table(n, alpha, m_max)?;
        let c_c = (1..=m_max)
            .map(|m| coeffs[m] / (m as f64).powf(alpha + 1.0))
            .fold(0.0, f64::max);
        let (c_s, c_z) = sz_constants(n, m_max);
        Ok(KernelTable { n, alpha, m_max, coeffs, c_c, c_s, c_z, profiles: ProfileCache::shared(n)? })
    }

    /// Process-wide table for `(n, alpha)` with at least `m_max` coefficients.
    pub fn shared(n: usize, alpha: f64, m_max: usize) -> Result<Arc<KernelTable>> {
        type Reg = Mutex<HashMap<(usize, u64), Arc<KernelTable>>>;
        static REG: OnceLock<Reg> = OnceLock::new();
        let reg = REG.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (n, alpha.to_bits());
        if let Some(t) = reg.lock().unwrap().get(&key) {
            if t.m_max >= m_max {
                return Ok(t.clone());
            }
        }
        let t = Arc::new(KernelTable::new(n, alpha, m_max)?);
        reg.lock().unwrap().insert(key, t.clone());
        Ok(t)
    }

    pub fn profiles(&self) -> &Arc<ProfileCache> {
        &self.profiles
    }

    fn exponent(&self) -> f64 {
        self.alpha + 2.0 * self.n as f64 - 3.0
    }

    fn scale(&self) -> f64 {
        self.c_c * self.c_s * self.c_s * self.c_z
    }

    /// The tail majorant `sum_{m>M} C_c C_S^2 C_Z m^{alpha+2n-3} q^m`.
    pub fn tail_bound(&self, q: f64, big_m: usize) -> f64 {
        self.scale() * power_tail(self.exponent(), q, big_m)
    }

    fn check_q(&self, q: f64) -> Result<()> {
        if !(q <= MAX_PRODUCT) {
            return Err(Error::Domain(format!("|x||y| = {q} exceeds {MAX_PRODUCT}")));
        }
        Ok(())
    }

    /// Truncation degree for `|x||y| = q` at absolute tolerance `tol`.
    pub fn truncation(&self, q: f64, tol: f64) -> Result<usize> {
        self.check_q(q)?;
        self.degree_with(q, tol, 0.0, 1.0)
    }

    fn degree_with(&self, q: f64, tol: f64, extra: f64, pre: f64) -> Result<usize> {
        match degree_for(self.scale() * pre, self.exponent() + extra, q, tol, self.m_max) {
            Some(m) => Ok(m),
            None => {
                let needed = degree_for(self.scale() * pre, self.exponent() + extra, q, tol, 50_000_000)
                    .unwrap_or(usize::MAX);
                Err(Error::Truncation { needed, max: self.m_max })
            }
        }
    }

    /// `R_alpha(x, y)` to absolute tolerance `tol`.
    pub fn eval(&self, x: &[f64], y: &[f64], tol: f64) -> Result<f64> {
        let (rx, ry) = (norm(x), norm(y));
        let q = rx * ry;
        self.check_q(q)?;
        if q == 0.0 {
            return Ok(self.coeffs[0]);
        }
        let big_m = self.degree_with(q, tol, 0.0, 1.0)?;
        Ok(self.eval_degree(x, y, big_m)?)
    }

    /// Partial sum through degree `big_m`.
    pub fn eval_degree(&self, x: &[f64], y: &[f64], big_m: usize) -> Result<f64> {
        let (rx, ry) = (norm(x), norm(y));
        let q = rx * ry;
        if q == 0.0 || big_m == 0 {
            return Ok(self.coeffs[0]);
        }
        if big_m > self.m_max {
            return Err(Error::Truncation { needed: big_m, max: self.m_max });
        }
        let sx = self.profiles.values(rx, big_m + 1)?;
        let sy = self.profiles.values(ry, big_m + 1)?;
        let t = dot(x, y) / q;
        let mut z = vec![0.0; big_m + 1];
        zonal_profile_into(self.n, t, &mut z);
        let mut acc = 0.0;
        let mut pw = 1.0;
        for m in 0..=big_m {
            acc += self.coeffs[m] * (sx[m] * sy[m]) * pw * z[m];
            pw *= q;
        }
        Ok(acc)
    }

    /// `grad_x R_alpha(x, y)`.
    pub fn gradient(&self, x: &[f64], y: &[f64], tol: f64) -> Result<Vec<f64>> {
        let (rx, ry) = (norm(x), norm(y));
        let q = rx * ry;
        self.check_q(q)?;
        let n = self.n;
        if ry == 0.0 {
            return Ok(vec![0.0; n]);
        }
        if rx == 0.0 {
            return self.gradient_degree(x, y, 1);
        }
        let big_m = self.degree_with(q, tol, 1.0, (1.0 / rx.max(1e-3)).max(ry))?;
        self.gradient_degree(x, y, big_m.max(1))
    }

    /// Gradient of the partial sum through degree `big_m`.
    pub fn gradient_degree(&self, x: &[f64], y: &[f64], big_m: usize) -> Result<Vec<f64>> {
        let (rx, ry) = (norm(x), norm(y));
        let n = self.n;
        let mut g = vec![0.0; n];
        if ry == 0.0 || big_m == 0 {
            return Ok(g);
        }
        if big_m > self.m_max {
            return Err(Error::Truncation { needed: big_m, max: self.m_max });
        }
        let sy = self.profiles.values(ry, big_m + 1)?;
        if rx == 0.0 {
            let s = self.profiles.values(0.0, 2)?;
            let k = self.coeffs[1] * s[1] * sy[1] * n as f64;
            for i in 0..n {
                g[i] = k * y[i];
            }
            return Ok(g);
        }
        let sx = self.profiles.values(rx, big_m + 1)?;
        let dsx = self.profiles.derivatives(rx, big_m + 1)?;
        let t = dot(x, y) / (rx * ry);
        let mut z = vec![0.0; big_m + 1];
        let mut dz = vec![0.0; big_m + 1];
        zonal_profile_into(n, t, &mut z);
        zonal_profile_dt_into(n, t, &mut dz);
        // radial part multiplies xhat, tangential part multiplies (yhat - t xhat)
        let (mut radial, mut tangential) = (0.0, 0.0);
        let mut pw = 1.0 / rx; // |x|^{m-1} |y|^m
        for m in 0..=big_m {
            let c = self.coeffs[m] * sy[m];
            let mf = m as f64;
            if m > 0 {
                radial += c * (dsx[m] * pw * rx * z[m] + sx[m] * pw * mf * z[m]);
                tangential += c * sx[m] * pw * dz[m];
            }
            pw *= rx * ry;
            if m == 0 {
                pw = ry;
            }
        }
        for i in 0..n {
            let xh = x[i] / rx;
            let yh = y[i] / ry;
            g[i] = radial * xh + tangential * (yh - t * xh);
        }
        Ok(g)
    }
}

/// Series evaluation of `R_alpha` through a request value.
pub fn kernel_eval(table: &KernelTable, req: &KernelValueRequest) -> Result<f64> {
    if req.tolerance < 1e-12 {
        return Err(Error::Input(format!("tolerance {} below 1e-12", req.tolerance)));
    }
    table.eval(req.x.coords(), req.y.coords(), req.tolerance)
}

pub fn kernel_gradient(table: &KernelTable, req: &KernelValueRequest) -> Result<Vec<f64>> {
    if req.tolerance < 1e-12 {
        return Err(Error::Input(format!("tolerance {} below 1e-12", req.tolerance)));
    }
    table.gradient(req.x.coords(), req.y.coords(), req.tolerance)
}

/// Closed form `(1-|x|^2)^{n-1} / |x - zeta|^{2(n-1)}`.
pub fn poisson_eval(x: &[f64], zeta: &[f64]) -> f64 {
    let n = x.len() as i32;
    let d2: f64 = x.iter().zip(zeta).map(|(a, b)| (a - b) * (a - b)).sum();
    ((1.0 - norm_sq(x)) / d2).powi(n - 1)
}

/// Partial sums `sum_{m<=M} S_m(|x|) Z_m(x, zeta)` with `M` from the tail
/// majorant `C_S C_Z m^{3n/2-3} |x|^m < tol`.
pub fn poisson_series(x: &[f64], zeta: &[f64], tol: f64) -> Result<f64> {
    let n = x.len();
    let rx = norm(x);
    if rx > MAX_PRODUCT {
        return Err(Error::Domain(format!("|x| = {rx} exceeds {MAX_PRODUCT}")));
    }
    if rx == 0.0 {
        return Ok(1.0);
    }
    let (c_s, c_z) = sz_constants(n, DEFAULT_M_MAX);
    let p = 1.5 * n as f64 - 3.0;
    let big_m = degree_for(c_s * c_z, p, rx, tol, 50_000_000)
        .ok_or(Error::Truncation { needed: usize::MAX, max: 50_000_000 })?;
    let s = ProfileCache::shared(n)?.values(rx, big_m + 1)?;
    let t = dot(x, zeta) / (rx * norm(zeta));
    let mut z = vec![0.0; big_m + 1];
    zonal_profile_into(n, t, &mut z);
    let mut acc = 0.0;
    let mut pw = 1.0;
    for m in 0..=big_m {
        acc += s[m] * pw * z[m];
        pw *= rx;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::radial_mass;

    #[test]
    fn constant_term_at_origin() {
        let t = KernelTable::shared(3, 0.0, 100).unwrap();
        let x = [0.3, -0.5, 0.2];
        assert_eq!(t.eval(&x, &[0.0; 3], 1e-12).unwrap(), t.coeffs[0]);
        assert!((t.coeffs[0] * radial_mass(3, 0.0) - 1.0).abs() < 1e-12);
        let t2 = KernelTable::shared(2, 0.0, 50).unwrap();
        assert!((t2.eval(&[0.0, 0.0], &[0.0, 0.0], 1e-12).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn symmetric_bitwise() {
        let t = KernelTable::shared(3, 1.0, 400).unwrap();
        let x = [0.3, -0.5, 0.2];
        let y = [-0.1, 0.6, 0.45];
        assert_eq!(t.eval(&x, &y, 1e-12).unwrap(), t.eval(&y, &x, 1e-12).unwrap());
    }

    #[test]
    fn tail_bound_decreases() {
        let t = KernelTable::shared(3, 0.0, 400).unwrap();
        let mut last = f64::INFINITY;
        for m in 10..300 {
            let b = t.tail_bound(0.8, m);
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn refuses_outside_domain() {
        let t = KernelTable::shared(3, 0.0, 400).unwrap();
        let x = [0.9995, 0.0, 0.0];
        assert!(matches!(t.eval(&x, &x, 1e-10), Err(Error::Domain(_))));
        let x = [0.99, 0.0, 0.0];
        match t.eval(&x, &x, 1e-10) {
            Err(Error::Truncation { needed, max }) => assert!(needed > max),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let t = KernelTable::shared(3, 0.0, 400).unwrap();
        let y = [0.2, -0.4, 0.5];
        for x in [[0.1, 0.3, -0.2], [0.5, 0.1, 0.4], [0.0, 0.0, 0.0]] {
            let g = t.gradient(&x, &y, 1e-12).unwrap();
            for i in 0..3 {
                let h = 1e-5;
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (t.eval(&xp, &y, 1e-13).unwrap() - t.eval(&xm, &y, 1e-13).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-5 * g[i].abs().max(1.0), "x={x:?} i={i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_eval(&[0.0; 3], &[1.0, 0.0, 0.0]), 1.0);
        assert!((poisson_eval(&[0.5, 0.0, 0.0], &[1.0, 0.0, 0.0]) - 9.0).abs() < 1e-13);
        let x = [0.5, 0.2, -0.3];
        let z = [0.0, 0.6, 0.8];
        assert!((poisson_series(&x, &z, 1e-12).unwrap() - poisson_eval(&x, &z)).abs() < 1e-10);
    }
}
