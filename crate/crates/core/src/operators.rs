//! H-harmonic functions as finite zonal expansions, the Bergman projection,
//! the operators `D^t_s`, Bloch norm estimates and the duality pairing.

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, BoundaryPoint, Point};
use crate::kernels::{KernelTable, ProfileCache, MAX_PRODUCT};
use crate::quadrature::{BallRule, SphereRule};
use crate::specialfn::{zonal_profile_dt_into, zonal_profile_into};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// All degree coefficients attached to one pole: the function
/// `x -> sum_m coeffs[m] S_m(|x|) Z_m(x, dir)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pole {
    pub dir: Vec<f64>,
    pub coeffs: Vec<f64>,
}

/// `f(x) = sum_m S_m(|x|) sum_j w_{m,j} Z_m(x, eta_{m,j})`, stored pole by pole.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalExpansion {
    n: usize,
    poles: Vec<Pole>,
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    Ok(BoundaryPoint::new(v.to_vec())?.coords().to_vec())
}

impl ZonalExpansion {
    /// From `(degree, [(weight, pole)])` terms.
    pub fn new(n: usize, terms: &[(usize, Vec<(f64, BoundaryPoint)>)]) -> Result<Self> {
        let mut poles: Vec<Pole> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for (m, list) in terms {
            for (w, eta) in list {
                if eta.dim() != n {
                    return Err(Error::Input(format!("pole of dimension {} in R^{n}", eta.dim())));
                }
                if !w.is_finite() {
                    return Err(Error::Input("non-finite weight".into()));
                }
                let key: Vec<u64> = eta.coords().iter().map(|c| c.to_bits()).collect();
                let k = *index.entry(key).or_insert_with(|| {
                    poles.push(Pole { dir: eta.coords().to_vec(), coeffs: Vec::new() });
                    poles.len() - 1
                });
                let c = &mut poles[k].coeffs;
                if c.len() <= *m {
                    c.resize(m + 1, 0.0);
                }
                c[*m] += w;
            }
        }
        ZonalExpansion::from_poles(n, poles)
    }

    pub fn from_poles(n: usize, poles: Vec<Pole>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input(format!("dimension {n} < 2")));
        }
        let mut out = Vec::with_capacity(poles.len());
        for p in poles {
            if p.dir.len() != n {
                return Err(Error::Input(format!("pole of dimension {} in R^{n}", p.dir.len())));
            }
            out.push(Pole { dir: unit(&p.dir)?, coeffs: p.coeffs });
        }
        Ok(ZonalExpansion { n, poles: out })
    }

    pub fn zero(n: usize) -> Self {
        ZonalExpansion { n, poles: Vec::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut dir = vec![0.0; n];
        dir[0] = 1.0;
        ZonalExpansion { n, poles: vec![Pole { dir, coeffs: vec![c] }] }
    }

    /// `S_m(|x|) Z_m(x, eta)`.
    pub fn poisson_term(m: usize, eta: &BoundaryPoint) -> Self {
        let mut coeffs = vec![0.0; m + 1];
        coeffs[m] = 1.0;
        ZonalExpansion { n: eta.dim(), poles: vec![Pole { dir: eta.coords().to_vec(), coeffs }] }
    }

    /// Partial sum of the Poisson kernel `P_h(x, zeta)` through `degree`.
    pub fn poisson_slice(zeta: &BoundaryPoint, degree: usize) -> Self {
        ZonalExpansion {
            n: zeta.dim(),
            poles: vec![Pole { dir: zeta.coords().to_vec(), coeffs: vec![1.0; degree + 1] }],
        }
    }

    /// Partial sum of `R_alpha(., b)` through `degree`.
    pub fn kernel_slice(table: &KernelTable, b: &[f64], degree: usize) -> Result<Self> {
        let n = table.n;
        if b.len() != n {
            return Err(Error::Input(format!("dimension mismatch: {} vs {n}", b.len())));
        }
        if degree > table.m_max {
            return Err(Error::Truncation { needed: degree, max: table.m_max });
        }
        let rb = norm(b);
        if rb == 0.0 {
            return Ok(ZonalExpansion::constant(n, table.coeffs[0]));
        }
        let s = table.profiles().values(rb, degree + 1)?;
        let mut coeffs = Vec::with_capacity(degree + 1);
        let mut pw = 1.0;
        for m in 0..=degree {
            coeffs.push(table.coeffs[m] * s[m] * pw);
            pw *= rb;
        }
        Ok(ZonalExpansion { n, poles: vec![Pole { dir: unit(b)?, coeffs }] })
    }

    /// Degree making the kernel slice accurate to `tol` on `|x| <= x_max`.
    pub fn slice_degree(table: &KernelTable, rb: f64, x_max: f64, tol: f64) -> Result<usize> {
        table.truncation((rb * x_max).min(MAX_PRODUCT), tol)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn max_degree(&self) -> usize {
        self.poles.iter().map(|p| p.coeffs.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// `(degree, [(weight, pole)])` view of the nonzero terms.
    pub fn terms(&self) -> Vec<(usize, Vec<(f64, Vec<f64>)>)> {
        let mut out = Vec::new();
        for m in 0..=self.max_degree() {
            let list: Vec<(f64, Vec<f64>)> = self
                .poles
                .iter()
                .filter_map(|p| p.coeffs.get(m).filter(|w| **w != 0.0).map(|w| (*w, p.dir.clone())))
                .collect();
            if !list.is_empty() {
                out.push((m, list));
            }
        }
        out
    }

    /// Multiplies the degree-`m` weights by `mult(m)`.
    pub fn map_degrees(&self, mult: impl Fn(usize) -> f64) -> Self {
        let poles = self
            .poles
            .iter()
            .map(|p| Pole {
                dir: p.dir.clone(),
                coeffs: p.coeffs.iter().enumerate().map(|(m, c)| c * mult(m)).collect(),
            })
            .collect();
        ZonalExpansion { n: self.n, poles }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map_degrees(|_| k)
    }

    /// Sum of two expansions (poles are not merged).
    pub fn plus(&self, other: &ZonalExpansion) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Input("dimension mismatch".into()));
        }
        let mut poles = self.poles.clone();
        poles.extend(other.poles.iter().cloned());
        Ok(ZonalExpansion { n: self.n, poles })
    }

    fn profiles(&self, r: f64) -> Result<Arc<Vec<f64>>> {
        ProfileCache::shared(self.n)?.values(r, self.max_degree() + 1)
    }

    /// `f(x)` for raw coordinates.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Ok(self.poles.iter().filter_map(|p| p.coeffs.first()).sum());
        }
        let s = self.profiles(r)?;
        let mut z = vec![0.0; self.max_degree() + 1];
        let mut acc = 0.0;
        for p in &self.poles {
            let k = p.coeffs.len();
            if k == 0 {
                continue;
            }
            zonal_profile_into(self.n, dot(x, &p.dir) / r, &mut z[..k]);
            let mut pw = 1.0;
            for m in 0..k {
                acc += p.coeffs[m] * s[m] * pw * z[m];
                pw *= r;
            }
        }
        Ok(acc)
    }

    /// `grad f(x)` for raw coordinates.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let r = norm(x);
        let mut g = vec![0.0; n];
        if r == 0.0 {
            let s1 = ProfileCache::shared(n)?.values(0.0, 2)?[1];
            for p in &self.poles {
                if let Some(c) = p.coeffs.get(1) {
                    for i in 0..n {
                        g[i] += c * s1 * n as f64 * p.dir[i];
                    }
                }
            }
            return Ok(g);
        }
        let k_max = self.max_degree() + 1;
        let cache = ProfileCache::shared(n)?;
        let s = cache.values(r, k_max)?;
        let ds = cache.derivatives(r, k_max)?;
        let mut z = vec![0.0; k_max];
        let mut dz = vec![0.0; k_max];
        for p in &self.poles {
            let k = p.coeffs.len();
            if k == 0 {
                continue;
            }
            let t = dot(x, &p.dir) / r;
            zonal_profile_into(n, t, &mut z[..k]);
            zonal_profile_dt_into(n, t, &mut dz[..k]);
            let (mut radial, mut tangential) = (0.0, 0.0);
            let mut pw = 1.0 / r; // r^{m-1}
            for m in 0..k {
                let c = p.coeffs[m];
                if m > 0 && c != 0.0 {
                    radial += c * (ds[m] * pw * r + s[m] * m as f64 * pw) * z[m];
                    tangential += c * s[m] * pw * dz[m];
                }
                pw = if m == 0 { 1.0 } else { pw * r };
            }
            for i in 0..n {
                let xh = x[i] / r;
                g[i] += radial * xh + tangential * (p.dir[i] - t * xh);
            }
        }
        Ok(g)
    }
}

pub fn evaluate(f: &ZonalExpansion, x: &Point) -> Result<f64> {
    f.value(x.coords())
}

pub fn gradient(f: &ZonalExpansion, x: &Point) -> Result<Vec<f64>> {
    f.grad(x.coords())
}

/// Values of a function at the nodes of a [`BallRule`]. `band` is the largest
/// spherical-harmonic degree present, when known.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    pub rule: Arc<BallRule>,
    pub values: Vec<f64>,
    pub band: Option<usize>,
}

impl SampledFunction {
    pub fn new(rule: Arc<BallRule>, values: Vec<f64>, band: Option<usize>) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(Error::Input(format!("{} values for {} nodes", values.len(), rule.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { index: k });
        }
        Ok(SampledFunction { rule, values, band })
    }

    pub fn sample(
        rule: Arc<BallRule>,
        f: impl Fn(&[f64]) -> Result<f64> + Sync,
        band: Option<usize>,
    ) -> Result<Self> {
        let n = rule.dim();
        let values = (0..rule.len())
            .into_par_iter()
            .map_init(|| vec![0.0; n], |y, k| {
                rule.node_into(k, y);
                f(y)
            })
            .collect::<Result<Vec<f64>>>()?;
        SampledFunction::new(rule, values, band)
    }

    /// Samples `y -> (1-|y|^2)^weight_power f(y)`.
    pub fn from_expansion(rule: Arc<BallRule>, f: &ZonalExpansion, weight_power: f64) -> Result<Self> {
        if rule.dim() != f.dim() {
            return Err(Error::Input("rule and function dimensions differ".into()));
        }
        let n = f.dim();
        let j_len = rule.sphere.len();
        let cache = ProfileCache::shared(n)?;
        let mut values = vec![0.0; rule.len()];
        for p in f.poles() {
            let k = p.coeffs.len();
            if k == 0 {
                continue;
            }
            let mut ztab = vec![0.0; j_len * k];
            ztab.par_chunks_mut(k).enumerate().for_each(|(j, row)| {
                zonal_profile_into(n, dot(rule.sphere.node(j), &p.dir), row);
            });
            values
                .par_chunks_mut(j_len)
                .zip(rule.radial.nodes.par_iter())
                .try_for_each(|(row, &r)| -> Result<()> {
                    let s = cache.values(r, k)?;
                    let mut pw = 1.0;
                    let rf: Vec<f64> = (0..k)
                        .map(|m| {
                            let v = p.coeffs[m] * s[m] * pw;
                            pw *= r;
                            v
                        })
                        .collect();
                    for (j, out) in row.iter_mut().enumerate() {
                        let z = &ztab[j * k..(j + 1) * k];
                        *out += rf.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
                    }
                    Ok(())
                })?;
        }
        if weight_power != 0.0 {
            for (row, &r) in values.chunks_mut(j_len).zip(&rule.radial.nodes) {
                let w = (1.0 - r * r).powf(weight_power);
                row.iter_mut().for_each(|v| *v *= w);
            }
        }
        let band = Some(f.max_degree());
        SampledFunction::new(rule, values, band)
    }
}

/// Precomputed radial moments for `x -> int R(x,y) phi(y) dnu(y)` over a rule.
#[derive(Debug)]
pub struct KernelIntegrator {
    table: Arc<KernelTable>,
    sphere: SphereRule,
    degree: usize,
    // moments[m * J + j] = sum_i w_i v_j S_m(r_i) r_i^m phi(r_i zeta_j)
    moments: Vec<f64>,
}

impl KernelIntegrator {
    /// Kernel truncated at the degree certified for `|x| <= x_max`, or at the
    /// band limit of `phi` when that is smaller.
    pub fn new(table: Arc<KernelTable>, phi: &SampledFunction, x_max: f64, tol: f64) -> Result<Self> {
        let rule = &phi.rule;
        if rule.dim() != table.n {
            return Err(Error::Config("rule and kernel dimensions differ".into()));
        }
        let r_top = rule.radial.nodes.iter().cloned().fold(0.0, f64::max);
        let mut degree = table.truncation((x_max * r_top).min(MAX_PRODUCT), tol)?;
        if let Some(b) = phi.band {
            degree = degree.min(b);
            if rule.sphere.exact_degree < 2 * degree {
                return Err(Error::Config(format!(
                    "sphere rule exact to degree {} cannot integrate kernel degree {degree} against band {b}",
                    rule.sphere.exact_degree
                )));
            }
        }
        let j_len = rule.sphere.len();
        let cache = table.profiles().clone();
        let radial: Vec<(f64, f64)> = rule.radial.nodes.iter().cloned().zip(rule.radial.weights.iter().cloned()).collect();
        let size = (degree + 1) * j_len;
        let moments = radial
            .par_iter()
            .enumerate()
            .try_fold(
                || vec![0.0; size],
                |mut acc, (i, &(r, w))| -> Result<Vec<f64>> {
                    let s = cache.values(r, degree + 1)?;
                    let row = &phi.values[i * j_len..(i + 1) * j_len];
                    let weighted: Vec<f64> = row.iter().zip(&rule.sphere.weights).map(|(a, b)| a * b).collect();
                    let mut pw = w;
                    for m in 0..=degree {
                        let k = s[m] * pw;
                        let dst = &mut acc[m * j_len..(m + 1) * j_len];
                        for (d, v) in dst.iter_mut().zip(&weighted) {
                            *d += k * v;
                        }
                        pw *= r;
                    }
                    Ok(acc)
                },
            )
            .try_reduce(
                || vec![0.0; size],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )?;
        Ok(KernelIntegrator { table, sphere: rule.sphere.clone(), degree, moments })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let rx = norm(x);
        let c = &self.table.coeffs;
        let j_len = self.sphere.len();
        if rx == 0.0 {
            return Ok(c[0] * self.moments[..j_len].iter().sum::<f64>());
        }
        let d = self.degree;
        let s = self.table.profiles().values(rx, d + 1)?;
        let mut acc = vec![0.0; d + 1];
        let mut z = vec![0.0; d + 1];
        for j in 0..j_len {
            zonal_profile_into(self.sphere.n, dot(x, self.sphere.node(j)) / rx, &mut z);
            for m in 0..=d {
                acc[m] += z[m] * self.moments[m * j_len + j];
            }
        }
        let mut total = 0.0;
        let mut pw = 1.0;
        for m in 0..=d {
            total += c[m] * s[m] * pw * acc[m];
            pw *= rx;
        }
        Ok(total)
    }
}

/// `P_alpha phi(x) = int R_alpha(x,y) phi(y) dnu_alpha(y)`.
pub fn bergman_project(phi: &SampledFunction, table: Arc<KernelTable>, eval_at: &Point, tol: f64) -> Result<f64> {
    if phi.rule.alpha() != table.alpha {
        return Err(Error::Config(format!(
            "rule weight {} differs from kernel weight {}",
            phi.rule.alpha(),
            table.alpha
        )));
    }
    KernelIntegrator::new(table, phi, eval_at.norm(), tol)?.eval(eval_at.coords())
}

fn check_st(s: f64, t: f64) -> Result<()> {
    if !(s > -1.0 && s + t > -1.0) {
        return Err(Error::Input(format!("need s > -1 and s + t > -1, got s = {s}, t = {t}")));
    }
    Ok(())
}

/// `D^t_s f`: the degree-`m` weights are multiplied by `c_m(s+t)/c_m(s)`.
pub fn dts_series(f: &ZonalExpansion, s: f64, t: f64) -> Result<ZonalExpansion> {
    check_st(s, t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let k = f.max_degree().max(1);
    let num = KernelTable::shared(f.dim(), s + t, k)?;
    let den = KernelTable::shared(f.dim(), s, k)?;
    Ok(f.map_degrees(|m| num.coeffs[m] / den.coeffs[m]))
}

/// Partial sum through `degree` of `D^{-(n-1)}_{n-1} P_h(., e_1)`, the
/// unbounded Bloch function: degree-`m` multipliers `c_m(0)/c_m(n-1)`.
pub fn unbounded_bloch_example(n: usize, degree: usize) -> Result<ZonalExpansion> {
    let s = n as f64 - 1.0;
    dts_series(&ZonalExpansion::poisson_slice(&BoundaryPoint::e1(n), degree), s, -s)
}

/// `int R_{s+t}(x,y) f(y) dnu_s(y)` for `f` sampled on a rule with weight `s`.
pub fn dts_integral(f: &SampledFunction, s: f64, t: f64, eval_at: &Point, tol: f64) -> Result<f64> {
    check_st(s, t)?;
    if f.rule.alpha() != s {
        return Err(Error::Config(format!("rule weight {} differs from s = {s}", f.rule.alpha())));
    }
    let table = KernelTable::shared(f.rule.dim(), s + t, crate::kernels::DEFAULT_M_MAX)?;
    KernelIntegrator::new(table, f, eval_at.norm(), tol)?.eval(eval_at.coords())
}

/// Radii `0, 1 - 2^{-k/per_octave}` (below `r_max`) and `r_max`, times the
/// sphere rule nodes and optionally the poles of the function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochGrid {
    pub per_octave: usize,
    pub sphere_degree: usize,
    pub r_max: f64,
    pub include_poles: bool,
}

impl Default for BlochGrid {
    fn default() -> Self {
        BlochGrid { per_octave: 1, sphere_degree: 16, r_max: 0.999, include_poles: true }
    }
}

impl BlochGrid {
    /// Twice the radial density and twice the sphere degree.
    pub fn refined(&self) -> Self {
        BlochGrid { per_octave: 2 * self.per_octave, sphere_degree: 2 * self.sphere_degree, ..self.clone() }
    }

    pub fn radii(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let p = self.per_octave.max(1) as f64;
        let mut k = 1;
        loop {
            let r = 1.0 - (-(k as f64) / p).exp2();
            if r >= self.r_max {
                break;
            }
            out.push(r);
            k += 1;
        }
        out.push(self.r_max);
        out
    }

    /// Grid points for `f` (row-major).
    pub fn points(&self, f: &ZonalExpansion) -> Result<Vec<f64>> {
        let n = f.dim();
        let sphere = SphereRule::new(n, self.sphere_degree)?;
        let mut dirs: Vec<f64> = sphere.nodes.clone();
        if self.include_poles {
            for p in f.poles() {
                if p.coeffs.len() > 1 {
                    dirs.extend_from_slice(&p.dir);
                }
            }
        }
        let mut out = vec![0.0; n];
        for r in self.radii().into_iter().skip(1) {
            for d in dirs.chunks(n) {
                out.extend(d.iter().map(|c| r * c));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub alpha: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochNormReport {
    /// Grid sup of `(1-|x|^2)|grad f(x)|`.
    pub seminorm: f64,
    /// `|f(0)| + seminorm`.
    pub norm: f64,
    /// Grid sup of `(1-|x|^2)^t |D^t_alpha f(x)|` per configuration.
    pub weighted: Vec<WeightedNorm>,
    /// Grid sup of `|f|`.
    pub sup_abs: f64,
    pub grid: BlochGrid,
    pub points: usize,
}

pub fn bloch_norms(f: &ZonalExpansion, configs: &[(f64, f64)], grid: &BlochGrid) -> Result<BlochNormReport> {
    let n = f.dim();
    let pts = grid.points(f)?;
    let derived = configs
        .iter()
        .map(|&(a, t)| dts_series(f, a, t))
        .collect::<Result<Vec<_>>>()?;
    let f0 = f.value(&vec![0.0; n])?;
    let per_point = pts
        .par_chunks(n)
        .map(|x| -> Result<(f64, f64, Vec<f64>)> {
            let w = 1.0 - crate::geometry::norm_sq(x);
            let g = norm(&f.grad(x)?) * w;
            let v = f.value(x)?.abs();
            let ws = derived
                .iter()
                .zip(configs)
                .map(|(d, &(_, t))| Ok(w.powf(t) * d.value(x)?.abs()))
                .collect::<Result<Vec<f64>>>()?;
            Ok((g, v, ws))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seminorm: f64 = 0.0;
    let mut sup_abs: f64 = f0.abs();
    let mut weighted = vec![0.0f64; configs.len()];
    for (g, v, ws) in per_point {
        seminorm = seminorm.max(g);
        sup_abs = sup_abs.max(v);
        for (a, b) in weighted.iter_mut().zip(ws) {
            *a = a.max(b);
        }
    }
    Ok(BlochNormReport {
        seminorm,
        norm: f0.abs() + seminorm,
        weighted: configs
            .iter()
            .zip(weighted)
            .map(|(&(alpha, t), value)| WeightedNorm { alpha, t, value })
            .collect(),
        sup_abs,
        grid: grid.clone(),
        points: pts.len() / n,
    })
}

/// `int f(x) (1-|x|^2)^t D^t_alpha g(x) dnu_alpha(x)`, integrated with a rule
/// for the weight `alpha + t` that is exact in the angular variables.
pub fn pairing(f: &ZonalExpansion, g: &ZonalExpansion, alpha: f64, t: f64, radial_nodes: usize) -> Result<f64> {
    if !(alpha > -1.0 && t > 0.0) {
        return Err(Error::Input(format!("need alpha > -1 and t > 0, got {alpha}, {t}")));
    }
    if f.dim() != g.dim() {
        return Err(Error::Input("dimension mismatch".into()));
    }
    let dg = dts_series(g, alpha, t)?;
    let rule = BallRule::new(f.dim(), alpha + t, radial_nodes, f.max_degree() + g.max_degree())?;
    let n = f.dim();
    let parts = (0..rule.len())
        .into_par_iter()
        .map_init(|| vec![0.0; n], |y, k| -> Result<f64> {
            rule.node_into(k, y);
            Ok(rule.weight(k) * f.value(y)? * dg.value(y)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::{dim_hm, s_factor};

    fn bp(c: &[f64]) -> BoundaryPoint {
        BoundaryPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn constant_and_poisson_term() {
        let f = ZonalExpansion::new(3, &[(0, vec![(3.0, bp(&[0.0, 1.0, 0.0]))])]).unwrap();
        assert_eq!(f.value(&[0.2, 0.3, -0.1]).unwrap(), 3.0);
        assert!(f.grad(&[0.2, 0.3, -0.1]).unwrap().iter().all(|g| g.abs() < 1e-15));
        let eta = bp(&[1.0, 2.0, 2.0]);
        let f = ZonalExpansion::poisson_term(4, &eta);
        let r = 0.6;
        let x: Vec<f64> = eta.coords().iter().map(|c| r * c).collect();
        let want = s_factor(3, 4, r).unwrap() * r.powi(4) * dim_hm(3, 4) as f64;
        assert!((f.value(&x).unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn linear_harmonic_gradient() {
        // n = 2, q_1(x) = x_1 = (Z_1(x, e1)) / 2
        let f = ZonalExpansion::new(2, &[(1, vec![(0.5, bp(&[1.0, 0.0]))])]).unwrap();
        for x in [[0.0, 0.0], [0.3, -0.4]] {
            let g = f.grad(&x).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-14 && g[1].abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let f = ZonalExpansion::new(
            3,
            &[
                (1, vec![(0.7, bp(&[0.0, 0.0, 1.0]))]),
                (3, vec![(-0.4, bp(&[1.0, 1.0, 0.0])), (0.2, bp(&[0.0, 1.0, -1.0]))]),
                (6, vec![(0.1, bp(&[1.0, -2.0, 0.5]))]),
            ],
        )
        .unwrap();
        let x = [0.31, -0.42, 0.25];
        let g = f.grad(&x).unwrap();
        for i in 0..3 {
            let h = 1e-5;
            let (mut a, mut b) = (x, x);
            a[i] += h;
            b[i] -= h;
            let fd = (f.value(&a).unwrap() - f.value(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn kernel_slice_matches_table() {
        let t = KernelTable::shared(3, 1.0, 400).unwrap();
        let b = [0.2, 0.4, -0.3];
        let k = ZonalExpansion::slice_degree(&t, norm(&b), 0.8, 1e-13).unwrap();
        let f = ZonalExpansion::kernel_slice(&t, &b, k).unwrap();
        let x = [-0.5, 0.1, 0.6];
        assert!((f.value(&x).unwrap() - t.eval(&x, &b, 1e-13).unwrap()).abs() < 1e-11);
    }

    #[test]
    fn dts_round_trip_and_identity() {
        let f = ZonalExpansion::new(3, &[(2, vec![(1.5, bp(&[0.0, 1.0, 0.0]))]), (0, vec![(2.0, bp(&[1.0, 0.0, 0.0]))])]).unwrap();
        assert_eq!(dts_series(&f, 0.0, 0.0).unwrap(), f);
        let back = dts_series(&dts_series(&f, 0.5, 1.0).unwrap(), 1.5, -1.0).unwrap();
        for (p, q) in back.poles().iter().zip(f.poles()) {
            for (a, b) in p.coeffs.iter().zip(&q.coeffs) {
                assert!((a - b).abs() <= 1e-12 * b.abs());
            }
        }
    }

    #[test]
    fn projection_of_constant() {
        let rule = Arc::new(BallRule::new(3, 0.0, 32, 8).unwrap());
        let phi = SampledFunction::sample(rule, |_| Ok(1.0), Some(0)).unwrap();
        let t = KernelTable::shared(3, 0.0, 400).unwrap();
        let x = Point::new(vec![0.3, 0.1, -0.5]).unwrap();
        assert!((bergman_project(&phi, t, &x, 1e-10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bloch_norm_of_constant() {
        let f = ZonalExpansion::constant(3, -2.5);
        let r = bloch_norms(&f, &[(0.0, 1.0)], &BlochGrid::default()).unwrap();
        assert_eq!(r.seminorm, 0.0);
        assert_eq!(r.norm, 2.5);
    }

    #[test]
    fn grid_radii() {
        let g = BlochGrid::default();
        let r = g.radii();
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 0.5);
        assert_eq!(*r.last().unwrap(), 0.999);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }
}
