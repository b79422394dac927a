//! Greedy r-lattices on a truncated ball, the disjoint partition `{E_m}` and
//! Monte Carlo measures `nu_beta(E_m)`.

use crate::error::{Error, Result};
use crate::geometry::{mobius_into, norm, norm_sq, pseudo_ball_unchecked, rho_unchecked};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erf_inv;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub const CONSECUTIVE_REJECTIONS: usize = 100_000;
pub const AUDIT_SAMPLES: usize = 10_000;
const AUDIT_ROUNDS: usize = 8;
const GRID_CELLS: f64 = 2.0e6;
const BATCH: usize = 4096;
const NO_HINT: u32 = u32::MAX;
const HINT_CELLS: f64 = 8.0e6;

/// Uniform cell grid over `[-R, R]^n` holding center indices.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    n: usize,
    extent: f64,
    h: f64,
    per_dim: usize,
    cells: Vec<Vec<u32>>,
}

impl SpatialIndex {
    fn new(n: usize, extent: f64, feature: f64) -> Self {
        let cap = GRID_CELLS.powf(1.0 / n as f64).floor() as usize;
        let per_dim = ((2.0 * extent / feature).ceil() as usize).clamp(1, cap.max(1));
        let h = 2.0 * extent / per_dim as f64;
        SpatialIndex { n, extent, h, per_dim, cells: vec![Vec::new(); per_dim.pow(n as u32)] }
    }

    fn coord(&self, c: f64) -> usize {
        (((c + self.extent) / self.h).floor().max(0.0) as usize).min(self.per_dim - 1)
    }

    fn insert(&mut self, x: &[f64], id: u32) {
        let k = x.iter().fold(0, |k, &c| k * self.per_dim + self.coord(c));
        self.cells[k].push(id);
    }

    /// Calls `visit` for every id stored in a cell meeting the box `c +- rad`.
    fn for_each_near(&self, c: &[f64], rad: f64, mut visit: impl FnMut(u32) -> bool) {
        let n = self.n;
        let mut lo = [0usize; 8];
        let mut hi = [0usize; 8];
        for i in 0..n {
            lo[i] = self.coord(c[i] - rad);
            hi[i] = self.coord(c[i] + rad);
        }
        let mut cur = lo;
        loop {
            let mut k = 0;
            for i in 0..n {
                k = k * self.per_dim + cur[i];
            }
            for &id in &self.cells[k] {
                if !visit(id) {
                    return;
                }
            }
            let mut i = n;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                if cur[i] < hi[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = lo[i];
            }
        }
    }
}

/// Finest-grid memo of the last center that covered a candidate there.
struct HintGrid {
    per_dim: usize,
    h: f64,
    hints: Vec<u32>,
}

impl HintGrid {
    fn new(n: usize) -> Self {
        let per_dim = (HINT_CELLS.powf(1.0 / n as f64).floor() as usize).max(1);
        HintGrid { per_dim, h: 2.0 / per_dim as f64, hints: vec![NO_HINT; per_dim.pow(n as u32)] }
    }

    fn cell_of(&self, x: &[f64]) -> usize {
        x.iter().fold(0, |k, &c| {
            k * self.per_dim + (((c + 1.0) / self.h).floor().max(0.0) as usize).min(self.per_dim - 1)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageAudit {
    pub samples: usize,
    /// Largest `min_m rho(x, a_m)` over the audit samples.
    pub max_min_rho: f64,
    pub worst: Vec<f64>,
    pub rounds: usize,
}

#[derive(Debug, Clone)]
pub struct Lattice {
    pub n: usize,
    pub r: f64,
    pub r_max: f64,
    pub seed: u64,
    /// Row-major centers, sorted by increasing `|a_m|`.
    centers: Vec<f64>,
    pub audit: Option<CoverageAudit>,
    index: SpatialIndex,
}

fn radical_inverse_in<const B: u64>(mut i: u64) -> f64 {
    let inv = 1.0 / B as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % B) as f64;
        i /= B;
        f *= inv;
    }
    out
}

fn radical_inverse(i: u64, base: u64) -> f64 {
    match base {
        2 => radical_inverse_in::<2>(i),
        3 => radical_inverse_in::<3>(i),
        5 => radical_inverse_in::<5>(i),
        7 => radical_inverse_in::<7>(i),
        11 => radical_inverse_in::<11>(i),
        13 => radical_inverse_in::<13>(i),
        17 => radical_inverse_in::<17>(i),
        19 => radical_inverse_in::<19>(i),
        23 => radical_inverse_in::<23>(i),
        29 => radical_inverse_in::<29>(i),
        31 => radical_inverse_in::<31>(i),
        37 => radical_inverse_in::<37>(i),
        _ => unreachable!("base {base} is not one of PRIMES"),
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Inverse of the radial distribution of hyperbolic volume on `|x| <= r_max`.
struct RadialSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialSampler {
    fn new(n: usize, r_max: f64) -> Self {
        let k = 8192;
        let dens = |s: f64| s.powi(n as i32 - 1) / (1.0 - s * s).powi(n as i32);
        let mut grid = Vec::with_capacity(k + 1);
        let mut cdf = Vec::with_capacity(k + 1);
        let mut acc = 0.0;
        grid.push(0.0);
        cdf.push(0.0);
        for i in 1..=k {
            let (a, b) = (r_max * (i - 1) as f64 / k as f64, r_max * i as f64 / k as f64);
            acc += (b - a) / 6.0 * (dens(a) + 4.0 * dens(0.5 * (a + b)) + dens(b));
            grid.push(b);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        RadialSampler { grid, cdf }
    }

    fn radius(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.grid[i - 1] + w * (self.grid[i] - self.grid[i - 1])
    }
}

fn sphere_dims(n: usize) -> usize {
    match n {
        2 => 1,
        3 => 2,
        _ => n,
    }
}

/// Area-preserving map from the unit cube of dimension `sphere_dims(n)` onto
/// the unit sphere.
fn cube_to_sphere(u: &[f64], out: &mut [f64]) {
    let n = out.len();
    match n {
        2 => {
            let th = std::f64::consts::TAU * u[0];
            out[0] = th.cos();
            out[1] = th.sin();
        }
        3 => {
            let zc = 2.0 * u[0] - 1.0;
            let rho = (1.0 - zc * zc).max(0.0).sqrt();
            let th = std::f64::consts::TAU * u[1];
            out[0] = rho * th.cos();
            out[1] = rho * th.sin();
            out[2] = zc;
        }
        _ => {
            for (o, p) in out.iter_mut().zip(u) {
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                *o = std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0);
            }
            let g = norm(out).max(1e-300);
            for o in out.iter_mut() {
                *o /= g;
            }
        }
    }
}

/// 6-point Gauss-Legendre rule on `[0, 1]`.
fn gauss_legendre_unit() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = crate::quadrature::gauss_jacobi(6, 0.0, 0.0).expect("Legendre rule");
        (x.iter().map(|t| (t + 1.0) / 2.0).collect(), w.iter().map(|v| v / 2.0).collect())
    })
}

/// Seeded, shifted Halton points mapped into `|x| <= r_max` with density
/// proportional to hyperbolic volume.
struct CandidateStream {
    shift: Vec<f64>,
    counters: Vec<HaltonCounter>,
    radial: RadialSampler,
    u: Vec<f64>,
    dir: Vec<f64>,
}

/// Radical inverse of `1, 2, 3, ...` in a fixed base, kept as an exact integer
/// numerator over `base^digits`.
struct HaltonCounter {
    base: u64,
    digits: Vec<u64>,
    place: Vec<u64>,
    numer: u64,
    denom: f64,
}

impl HaltonCounter {
    fn new(base: u64) -> Self {
        let mut k = 0;
        let mut top: u64 = 1;
        while let Some(next) = top.checked_mul(base) {
            if next > 1 << 62 {
                break;
            }
            top = next;
            k += 1;
        }
        let mut place = Vec::with_capacity(k);
        let mut p = top;
        for _ in 0..k {
            p /= base;
            place.push(p);
        }
        HaltonCounter { base, digits: vec![0; k], place, numer: 0, denom: top as f64 }
    }

    fn next(&mut self) -> f64 {
        for (d, p) in self.digits.iter_mut().zip(&self.place) {
            *d += 1;
            if *d < self.base {
                self.numer += p;
                break;
            }
            *d = 0;
            self.numer -= (self.base - 1) * p;
        }
        self.numer as f64 / self.denom
    }
}

impl CandidateStream {
    fn new(n: usize, r_max: f64, seed: u64) -> Self {
        let dims = 1 + sphere_dims(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CandidateStream {
            shift: (0..dims).map(|_| rng.random::<f64>()).collect(),
            counters: PRIMES[..dims].iter().map(|&b| HaltonCounter::new(b)).collect(),
            radial: RadialSampler::new(n, r_max),
            u: vec![0.0; dims],
            dir: vec![0.0; n],
        }
    }

    fn point(&mut self, out: &mut Vec<f64>) {
        for ((u, c), s) in self.u.iter_mut().zip(self.counters.iter_mut()).zip(&self.shift) {
            *u = (c.next() + s).fract();
        }
        cube_to_sphere(&self.u[1..], &mut self.dir);
        let r = self.radial.radius(self.u[0]);
        out.extend(self.dir.iter().map(|c| r * c));
    }
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.centers.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, m: usize) -> &[f64] {
        &self.centers[m * self.n..(m + 1) * self.n]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn new_index(n: usize, r: f64, r_max: f64) -> SpatialIndex {
        let e = pseudo_ball_unchecked(&{
            let mut v = vec![0.0; n];
            v[0] = r_max;
            v
        }, r);
        SpatialIndex::new(n, 1.0, 2.0 * e.radius)
    }

    fn from_centers(n: usize, r: f64, r_max: f64, seed: u64, centers: Vec<f64>) -> Self {
        let mut index = Lattice::new_index(n, r, r_max);
        for (m, c) in centers.chunks(n).enumerate() {
            index.insert(c, m as u32);
        }
        Lattice { n, r, r_max, seed, centers, audit: None, index }
    }

    /// Calls `visit(m, rho)` for every center with `rho(x, a_m) < s`.
    pub fn near(&self, x: &[f64], s: f64, mut visit: impl FnMut(usize, f64)) {
        let e = pseudo_ball_unchecked(x, s);
        let centers = &self.centers;
        let n = self.n;
        self.index.for_each_near(&e.center, e.radius * (1.0 + 1e-9) + 1e-12, |id| {
            let m = id as usize;
            let d = rho_unchecked(x, &centers[m * n..(m + 1) * n]);
            if d < s {
                visit(m, d);
            }
            true
        });
    }

    fn any_within(&self, x: &[f64], s: f64) -> Option<u32> {
        let e = pseudo_ball_unchecked(x, s);
        let n = self.n;
        let mut hit = None;
        self.index.for_each_near(&e.center, e.radius * (1.0 + 1e-9) + 1e-12, |id| {
            let m = id as usize;
            if rho_unchecked(x, &self.centers[m * n..(m + 1) * n]) < s {
                hit = Some(id);
            }
            hit.is_none()
        });
        hit
    }

    /// `min_m rho(x, a_m)` when it is below `s`.
    pub fn nearest_within(&self, x: &[f64], s: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.near(x, s, |m, d| {
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((m, d));
            }
        });
        best
    }

    fn audit_round(&self, round: usize) -> CoverageAudit {
        let n = self.n;
        let seed = self.seed ^ 0xA0D1_7000_0000_0000 ^ round as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..AUDIT_SAMPLES).map(|_| uniform_in_ball(&mut rng, n, self.r_max)).collect();
        let res: Vec<f64> = pts
            .par_iter()
            .map(|x| {
                let mut s = 2.0 * self.r;
                loop {
                    if let Some((_, d)) = self.nearest_within(x, s.min(0.999_999)) {
                        return d;
                    }
                    if s >= 0.999_999 {
                        return 1.0;
                    }
                    s = (2.0 * s / (1.0 + s * s)).max(s + 0.1);
                }
            })
            .collect();
        let (k, worst) = res
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) });
        CoverageAudit { samples: AUDIT_SAMPLES, max_min_rho: worst, worst: pts[k].clone(), rounds: round + 1 }
    }
}

/// Uniform sample in the Euclidean ball of radius `rad`.
pub fn uniform_in_ball(rng: &mut impl Rng, n: usize, rad: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let s = norm_sq(&v);
        if s <= 1.0 {
            return v.into_iter().map(|c| c * rad).collect();
        }
    }
}

fn sort_by_norm(n: usize, centers: &[f64]) -> Vec<f64> {
    let mut rows: Vec<&[f64]> = centers.chunks(n).collect();
    rows.sort_by(|a, b| norm_sq(a).total_cmp(&norm_sq(b)).then_with(|| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    }));
    rows.concat()
}

/// Greedy r-separated net on `|x| <= r_max`, audited for covering.
pub fn build_lattice(n: usize, r: f64, r_max: f64, seed: u64) -> Result<Lattice> {
    if n < 2 || n > 8 {
        return Err(Error::Input(format!("dimension {n} outside 2..=8")));
    }
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::Input(format!("r = {r} outside (0, 1/2)")));
    }
    if !(r_max > 0.0 && r_max <= 0.999) {
        return Err(Error::Input(format!("R_max = {r_max} outside (0, 0.999]")));
    }
    let mut lat = Lattice::from_centers(n, r, r_max, seed, Vec::new());
    let mut hints = HintGrid::new(n);
    let mut stream = CandidateStream::new(n, r_max, seed);
    let mut extra: Vec<Vec<f64>> = Vec::new();
    let mut audit = None;
    for round in 0..AUDIT_ROUNDS {
        let mut rejected = 0usize;
        let mut batch: Vec<f64> = Vec::with_capacity(BATCH * n);
        while rejected < CONSECUTIVE_REJECTIONS {
            batch.clear();
            for p in extra.drain(..) {
                batch.extend(p);
            }
            while batch.len() < BATCH * n {
                stream.point(&mut batch);
            }
            for x in batch.chunks(n) {
                let cell = hints.cell_of(x);
                let h = hints.hints[cell] as usize;
                let covered = (h != NO_HINT as usize && rho_unchecked(x, lat.center(h)) < r)
                    || match lat.any_within(x, r) {
                        Some(id) => {
                            hints.hints[cell] = id;
                            true
                        }
                        None => false,
                    };
                if !covered {
                    let id = lat.len() as u32;
                    lat.centers.extend_from_slice(x);
                    lat.index.insert(x, id);
                    rejected = 0;
                } else {
                    rejected += 1;
                    if rejected >= CONSECUTIVE_REJECTIONS {
                        break;
                    }
                }
            }
        }
        let a = lat.audit_round(round);
        let done = a.max_min_rho < r;
        if !done {
            // uncovered audit points rejoin the candidate stream
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA0D1_7000_0000_0000 ^ round as u64);
            for _ in 0..AUDIT_SAMPLES {
                let x = uniform_in_ball(&mut rng, n, r_max);
                if lat.nearest_within(&x, r).is_none() {
                    extra.push(x);
                }
            }
        }
        audit = Some(a);
        if done {
            break;
        }
    }
    let audit = audit.expect("at least one audit round");
    if audit.max_min_rho >= r {
        return Err(Error::Construction { worst_rho: audit.max_min_rho, sample: audit.worst.clone() });
    }
    let sorted = sort_by_norm(n, &lat.centers);
    let mut out = Lattice::from_centers(n, r, r_max, seed, sorted);
    out.audit = Some(audit);
    Ok(out)
}

/// Text form: header `n r R_max seed count`, then one center per line.
pub fn lattice_to_text(l: &Lattice) -> String {
    let mut s = format!("{} {} {} {} {}\n", l.n, l.r, l.r_max, l.seed, l.len());
    for c in l.centers.chunks(l.n) {
        let row: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn lattice_from_text(text: &str) -> Result<Lattice> {
    let bad = |what: &str| Error::Input(format!("malformed lattice text: {what}"));
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
    if head.len() != 5 {
        return Err(bad("header needs 5 fields"));
    }
    let n: usize = head[0].parse().map_err(|_| bad("n"))?;
    let r: f64 = head[1].parse().map_err(|_| bad("r"))?;
    let r_max: f64 = head[2].parse().map_err(|_| bad("R_max"))?;
    let seed: u64 = head[3].parse().map_err(|_| bad("seed"))?;
    let count: usize = head[4].parse().map_err(|_| bad("count"))?;
    if n < 2 || n > 8 {
        return Err(bad("dimension"));
    }
    let mut centers = Vec::with_capacity(count * n);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad("coordinate")))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != n || norm(&row) >= 1.0 {
            return Err(bad("center row"));
        }
        centers.extend(row);
    }
    if centers.len() != count * n {
        return Err(bad("count mismatch"));
    }
    Ok(Lattice::from_centers(n, r, r_max, seed, centers))
}

/// Monte Carlo estimate of `nu_beta(E_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
}

pub const MEASURE_REL_SE: f64 = 0.01;
pub const MEASURE_MAX_SAMPLES: usize = 1 << 20;
const MEASURE_SHIFTS: usize = 16;
const MEASURE_START: usize = 16;

/// The disjoint sets `E_m` attached to a lattice.
#[derive(Debug)]
pub struct Partition {
    pub lattice: Arc<Lattice>,
    measures: Mutex<HashMap<u64, Arc<Vec<MeasureEstimate>>>>,
}

impl Partition {
    pub fn new(lattice: Arc<Lattice>) -> Self {
        Partition { lattice, measures: Mutex::new(HashMap::new()) }
    }

    /// The `m` with `x in E_m`: the center of the half-ball holding `x`, else
    /// the first center whose r-ball holds `x`.
    pub fn index(&self, x: &[f64]) -> Result<usize> {
        let l = &self.lattice;
        let half = l.r / 2.0;
        let mut first: Option<usize> = None;
        let mut inner: Option<usize> = None;
        l.near(x, l.r, |m, d| {
            if d < half {
                inner = Some(m);
            }
            if first.is_none_or(|f| m < f) {
                first = Some(m);
            }
        });
        inner.or(first).ok_or_else(|| Error::Coverage(format!("{x:?} is not covered by the lattice")))
    }

    /// `nu_beta(E_m)` by randomized ray integration. Pulled back by `phi_{a_m}`,
    /// `E_m` is `B_r` minus Euclidean balls (the images of the competing
    /// pseudo-balls), so along each ray from the origin the radial integral is
    /// exact up to Gauss-Legendre error; the directions are shifted Halton
    /// points, independent shifts keyed by `(seed, m)`, and the standard error
    /// is the spread across shifts.
    pub fn measure(&self, m: usize, beta: f64) -> Result<MeasureEstimate> {
        let l = &self.lattice;
        if m >= l.len() {
            return Err(Error::Input(format!("index {m} out of range")));
        }
        if !(beta > -1.0) {
            return Err(Error::Input(format!("beta = {beta} must exceed -1")));
        }
        let a = l.center(m);
        let n = l.n;
        let (r, half) = (l.r, l.r / 2.0);
        let a2 = norm_sq(a);
        // competing balls in the pulled-back picture: (center, radius^2)
        let mut balls: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut b = vec![0.0; n];
        l.near(a, 2.0 * r / (1.0 + r * r) + 1e-12, |k, _| {
            if k == m {
                return;
            }
            mobius_into(a, l.center(k), &mut b);
            let s = if k < m { r } else { half };
            let e = pseudo_ball_unchecked(&b, s);
            if norm(&e.center) - e.radius < r {
                balls.push((e.center, e.radius * e.radius));
            }
        });
        let (gx, gw) = gauss_legendre_unit();
        let beta_int = beta.fract() == 0.0 && beta.abs() < 64.0;
        let radial = |dir: &[f64], lo: f64, hi: f64| -> f64 {
            let ad = crate::geometry::dot(a, dir);
            let mut acc = 0.0;
            for (x, w) in gx.iter().zip(gw) {
                let s = lo + (hi - lo) * x;
                let br = 1.0 - 2.0 * s * ad + s * s * a2;
                let wy = (1.0 - a2) * (1.0 - s * s) / br;
                let wb = if beta_int { wy.powi(beta as i32) } else { wy.powf(beta) };
                acc += w * s.powi(n as i32 - 1) * wb * ((1.0 - a2) / br).powi(n as i32);
            }
            acc * (hi - lo) * n as f64
        };
        let dims = sphere_dims(n);
        let mut rng = ChaCha8Rng::seed_from_u64(l.seed);
        rng.set_stream(m as u64);
        let shifts: Vec<Vec<f64>> =
            (0..MEASURE_SHIFTS).map(|_| (0..dims).map(|_| rng.random::<f64>()).collect()).collect();
        let mut sums = vec![0.0; MEASURE_SHIFTS];
        let (mut done, mut per) = (0u64, MEASURE_START as u64);
        let (mut u, mut base, mut dir) = (vec![0.0; dims], vec![0.0; dims], vec![0.0; n]);
        let mut cuts: Vec<(f64, f64)> = Vec::with_capacity(balls.len());
        loop {
            for i in done..per {
                for d in 0..dims {
                    base[d] = radical_inverse(i + 1, PRIMES[d]);
                }
                for (shift, sum) in shifts.iter().zip(sums.iter_mut()) {
                    for d in 0..dims {
                        u[d] = (base[d] + shift[d]).fract();
                    }
                    cube_to_sphere(&u, &mut dir);
                    cuts.clear();
                    for (c, rad2) in &balls {
                        let p = crate::geometry::dot(&dir, c);
                        let disc = p * p - norm_sq(c) + rad2;
                        if disc > 0.0 {
                            let q = disc.sqrt();
                            let (lo, hi) = ((p - q).max(half), (p + q).min(r));
                            if lo < hi {
                                cuts.push((lo, hi));
                            }
                        }
                    }
                    cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
                    let mut v = radial(&dir, 0.0, half);
                    let mut pos = half;
                    for &(lo, hi) in &cuts {
                        if lo > pos {
                            v += radial(&dir, pos, lo);
                        }
                        pos = pos.max(hi);
                    }
                    if pos < r {
                        v += radial(&dir, pos, r);
                    }
                    *sum += v;
                }
            }
            done = per;
            let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
            let k = MEASURE_SHIFTS as f64;
            let mean = means.iter().sum::<f64>() / k;
            let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            let count = done as usize * MEASURE_SHIFTS;
            if mean > 0.0 && se <= MEASURE_REL_SE * mean {
                return Ok(MeasureEstimate { value: mean, std_err: se, samples: count });
            }
            if count >= MEASURE_MAX_SAMPLES {
                return Err(Error::Precision(format!(
                    "measure of E_{m}: relative standard error {} after {count} rays",
                    if mean > 0.0 { se / mean } else { f64::INFINITY }
                )));
            }
            per *= 2;
        }
    }

    /// All measures for `beta`, cached.
    pub fn measures(&self, beta: f64) -> Result<Arc<Vec<MeasureEstimate>>> {
        if let Some(v) = self.measures.lock().unwrap().get(&beta.to_bits()) {
            return Ok(v.clone());
        }
        let v = Arc::new(
            (0..self.lattice.len())
                .into_par_iter()
                .map(|m| self.measure(m, beta))
                .collect::<Result<Vec<_>>>()?,
        );
        self.measures.lock().unwrap().insert(beta.to_bits(), v.clone());
        Ok(v)
    }
}

pub fn partition_index(p: &Partition, x: &crate::geometry::Point) -> Result<usize> {
    p.index(x.coords())
}

pub fn partition_measure(p: &Partition, m: usize, beta: f64) -> Result<MeasureEstimate> {
    p.measure(m, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separation_and_round_trip() {
        let l = build_lattice(2, 0.4, 0.5, 7).unwrap();
        for i in 0..l.len() {
            for j in 0..i {
                assert!(rho_unchecked(l.center(i), l.center(j)) >= 0.4);
            }
        }
        let half: f64 = l
            .centers()
            .chunks(2)
            .map(|a| pseudo_ball_unchecked(a, 0.2).radius.powi(2))
            .sum();
        assert!(half <= 1.0);
        let text = lattice_to_text(&l);
        let back = lattice_from_text(&text).unwrap();
        assert_eq!(back.centers(), l.centers());
        assert_eq!(lattice_to_text(&back), text);
    }

    #[test]
    fn centers_index_themselves() {
        let l = Arc::new(build_lattice(3, 0.3, 0.6, 1).unwrap());
        let p = Partition::new(l.clone());
        for m in 0..l.len() {
            assert_eq!(p.index(l.center(m)).unwrap(), m);
        }
    }

    #[test]
    fn single_center_measure() {
        let l = Arc::new(Lattice::from_centers(3, 0.4, 0.3, 3, vec![0.0, 0.0, 0.0]));
        let p = Partition::new(l);
        let e = p.measure(0, 0.0).unwrap();
        assert!((e.value - 0.4f64.powi(3)).abs() < 1e-12);
        assert!(p.index(&[0.5, 0.0, 0.0]).is_err());
    }
}
