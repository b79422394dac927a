//! Atomic decomposition on a lattice: the operators `T` (coefficients to
//! kernel sums) and `U` (function to sampled `D^t_alpha f`), and the Neumann
//! solver for `f = T lambda`.

use crate::error::{Error, Result};
use crate::geometry::{norm, norm_sq, BoundaryPoint};
use crate::kernels::KernelTable;
use crate::lattice::{Lattice, MeasureEstimate, Partition};
use crate::operators::{dts_series, unbounded_bloch_example, BlochGrid, ZonalExpansion};
use crate::quadrature::SphereRule;
use crate::specialfn::SmEvaluator;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const TABLE_M_MAX: usize = 3000;
const NORM_TABLE_NODES: usize = 48;
const BLOCK: usize = 128;
const DIRECT_LIMIT: usize = 20_000;

/// How the atom attached to `a_m` is normalized: by its Bloch norm, or by the
/// weight power `(1-|a_m|^2)^{-(alpha+n)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalization {
    KernelBlochNorm,
    WeightPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicConfig {
    pub alpha: f64,
    pub t: f64,
    pub normalization: Normalization,
    pub max_iterations: usize,
    /// Stop once `||g_k|| < tolerance * ||f||`.
    pub tolerance: f64,
    /// Kernel truncation tolerance, relative to the kernel size at the
    /// largest product `norm_radius * R_max`.
    pub kernel_tol: f64,
    /// Norms and reconstruction are certified on `|x| <= norm_radius`.
    pub norm_radius: f64,
    /// Grid used inside the iteration.
    pub grid: BlochGrid,
    /// Grid used for the final certification.
    pub fine_grid: BlochGrid,
}

impl AtomicConfig {
    pub fn new(alpha: f64, t: f64, normalization: Normalization) -> Self {
        let grid = BlochGrid { per_octave: 2, sphere_degree: 16, r_max: 0.9, include_poles: true };
        AtomicConfig {
            alpha,
            t,
            normalization,
            max_iterations: 40,
            tolerance: 1e-4,
            kernel_tol: 1e-6,
            norm_radius: 0.9,
            fine_grid: grid.refined(),
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > -1.0) {
            return Err(Error::Input(format!("alpha = {} must exceed -1", self.alpha)));
        }
        if !(self.t > 0.0) {
            return Err(Error::Input(format!("t = {} must be positive", self.t)));
        }
        if !(self.tolerance > 0.0 && self.kernel_tol > 0.0) {
            return Err(Error::Input("tolerances must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Input("at least one iteration is required".into()));
        }
        if !(self.norm_radius > 0.0 && self.norm_radius < 1.0) {
            return Err(Error::Input(format!("norm radius {} outside (0,1)", self.norm_radius)));
        }
        Ok(())
    }
}

/// One coefficient per lattice center, with the sup norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    pub values: Vec<f64>,
}

impl CoefficientSequence {
    pub fn zeros(len: usize) -> Self {
        CoefficientSequence { values: vec![0.0; len] }
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite coefficient".into()));
        }
        Ok(CoefficientSequence { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `max |lambda_m|` over centers with `|a_m| > radius`.
    pub fn tail_sup(&self, lattice: &Lattice, radius: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(m, _)| norm(lattice.center(*m)) > radius)
            .fold(0.0, |a, (_, v)| a.max(v.abs()))
    }
}

/// `sup_x (1-|x|^2)^t |R_{alpha+t}(x, a)|` for `|a| = ra`, searched along
/// rays through the plane of `a`.
pub fn kernel_bloch_norm(table: &KernelTable, t: f64, ra: f64) -> Result<f64> {
    let n = table.n;
    let mut a = vec![0.0; n];
    a[0] = ra;
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; n];
    for i in 0..=400 {
        let s = if i == 0 { 0.0 } else { 1.0 - 10f64.powf(-3.0 * i as f64 / 400.0) };
        let w = (1.0 - s * s).powf(t);
        for j in 0..24 {
            let th = std::f64::consts::PI * j as f64 / 24.0;
            x[0] = s * th.cos();
            x[1] = s * th.sin();
            let tol = 1e-10 / w.max(1e-300);
            best = best.max(w * table.eval(&x, &a, tol.min(1e-6))?.abs());
            if s == 0.0 {
                break;
            }
        }
    }
    Ok(best)
}

/// `log ||R_alpha(., a)||_B` tabulated against `v = -log(1-|a|^2)`.
#[derive(Debug, Clone)]
struct NormTable {
    v_max: f64,
    log_norm: Vec<f64>,
}

impl NormTable {
    fn new(table: &KernelTable, t: f64, r_max: f64) -> Result<Self> {
        let v_max = -(1.0 - r_max * r_max).ln();
        let log_norm = (0..=NORM_TABLE_NODES)
            .into_par_iter()
            .map(|i| {
                let v = v_max * i as f64 / NORM_TABLE_NODES as f64;
                let ra = (1.0 - (-v).exp()).max(0.0).sqrt();
                Ok(kernel_bloch_norm(table, t, ra)?.ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(NormTable { v_max, log_norm })
    }

    fn at(&self, ra: f64) -> f64 {
        let v = -(1.0 - ra * ra).ln();
        let x = (v / self.v_max * NORM_TABLE_NODES as f64).clamp(0.0, NORM_TABLE_NODES as f64);
        let i = (x.floor() as usize).min(NORM_TABLE_NODES - 1);
        let w = x - i as f64;
        ((1.0 - w) * self.log_norm[i] + w * self.log_norm[i + 1]).exp()
    }
}

/// Real spherical harmonics in `R^3`, fully normalized so that
/// `sum_q Y_kq(x) Y_kq(y) = Z_k(x, y)`, each degree block scaled by
/// `S_k(|x|) |x|^k`.
#[derive(Debug, Clone)]
struct Harmonics {
    degree: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    sm: SmEvaluator,
}

impl Harmonics {
    fn new(degree: usize) -> Result<Self> {
        let w = degree + 1;
        let mut a = vec![0.0; w * w];
        let mut b = vec![0.0; w * w];
        for q in 0..=degree {
            for k in q + 2..=degree {
                let (kf, qf) = (k as f64, q as f64);
                a[k * w + q] = ((2.0 * kf - 1.0) * (2.0 * kf + 1.0) / ((kf - qf) * (kf + qf))).sqrt();
                b[k * w + q] = ((2.0 * kf + 1.0) * (kf + qf - 1.0) * (kf - qf - 1.0)
                    / ((kf - qf) * (kf + qf) * (2.0 * kf - 3.0)))
                    .sqrt();
            }
        }
        Ok(Harmonics { degree, a, b, sm: SmEvaluator::new(3, degree)? })
    }

    fn len(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    fn fill(&self, x: &[f64], col: &mut [f64]) -> Result<()> {
        col.fill(0.0);
        let r = norm(x);
        col[0] = 1.0;
        if r == 0.0 {
            return Ok(());
        }
        let big_k = self.degree;
        let w = big_k + 1;
        let s = self.sm.profile(r, big_k)?;
        let mut rad = Vec::with_capacity(w);
        let mut pw = 1.0;
        for sk in s.iter() {
            rad.push(sk * pw);
            pw *= r;
        }
        let ct = x[2] / r;
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let st = rho / r;
        let (cphi, sphi) = if rho > 0.0 { (x[0] / rho, x[1] / rho) } else { (1.0, 0.0) };
        let (mut cq, mut sq) = (1.0, 0.0);
        let mut pqq = 1.0;
        for q in 0..=big_k {
            if q == 1 {
                pqq = 3f64.sqrt() * st;
            } else if q > 1 {
                pqq *= ((2 * q + 1) as f64 / (2 * q) as f64).sqrt() * st;
            }
            if q > 0 {
                let c = cq * cphi - sq * sphi;
                sq = sq * cphi + cq * sphi;
                cq = c;
            }
            if pqq.abs() < 1e-290 {
                break;
            }
            let mut put = |k: usize, p: f64| {
                let v = rad[k] * p;
                if q == 0 {
                    col[k * k] = v;
                } else {
                    col[k * k + 2 * q - 1] = v * cq;
                    col[k * k + 2 * q] = v * sq;
                }
            };
            put(q, pqq);
            if q == big_k {
                break;
            }
            let mut prev = pqq;
            let mut cur = ((2 * q + 3) as f64).sqrt() * ct * pqq;
            put(q + 1, cur);
            for k in q + 2..=big_k {
                let next = self.a[k * w + q] * ct * cur - self.b[k * w + q] * prev;
                prev = cur;
                cur = next;
                put(k, cur);
            }
        }
        Ok(())
    }

    fn degree_of(h: usize) -> usize {
        (h as f64).sqrt().floor() as usize
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Harmonic(Harmonics),
    Direct,
}

/// State of `T` applied to the current coefficients: harmonic moments, or the
/// per-center weights themselves.
enum Field {
    Moments(DMatrix<f64>),
    Weights(Vec<Vec<f64>>),
}

/// The function `x -> sum_m lambda_m R_alpha(x, a_m) / N_m`.
#[derive(Debug, Clone)]
pub struct AtomicFunction {
    lattice: Arc<Lattice>,
    table: Arc<KernelTable>,
    degree: usize,
    weights: Vec<f64>,
    /// `sum_m |lambda_m| (1-|a_m|^2)^{alpha+n}`.
    pub sup_bound_sum: f64,
}

impl AtomicFunction {
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.lattice.n {
            return Err(Error::Input("dimension mismatch".into()));
        }
        let mut acc = 0.0;
        for (m, w) in self.weights.iter().enumerate() {
            if *w != 0.0 {
                acc += w * self.table.eval_degree(x, self.lattice.center(m), self.degree)?;
            }
        }
        Ok(acc)
    }
}

/// One decomposition: coefficients, residual history and certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub normalization: Normalization,
    pub lambda: CoefficientSequence,
    /// `||g_k||_B,est` on the iteration grid, `g_0 = f`.
    pub history: Vec<f64>,
    pub converged: bool,
    /// `||f||_B,est` on the fine grid.
    pub f_norm: f64,
    /// `||f - T lambda||_B,est` on the fine grid.
    pub final_residual: f64,
    /// `sup |T lambda - f| / sup |f|` on the fine grid.
    pub reconstruction_error: f64,
    /// `||lambda||_inf / ||f||_B,est`.
    pub coefficient_ratio: f64,
    /// `T lambda` on the fine grid.
    pub reconstruction: Vec<f64>,
}

impl Decomposition {
    /// Largest `||g_{k+1}|| / ||g_k||`.
    pub fn worst_ratio(&self) -> f64 {
        self.history.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max)
    }
}

/// Lattice, partition measures, normalizers and kernels for one `(alpha, t)`.
pub struct AtomicSystem {
    pub partition: Arc<Partition>,
    pub cfg: AtomicConfig,
    measures: Arc<Vec<MeasureEstimate>>,
    norm_table: NormTable,
    table_a: Arc<KernelTable>,
    table_b: Arc<KernelTable>,
    degree: usize,
    engine: Engine,
    contraction: std::sync::Mutex<Option<f64>>,
}

struct Job<'a> {
    f: &'a ZonalExpansion,
    dtf: ZonalExpansion,
    norms: Vec<f64>,
}

impl AtomicSystem {
    pub fn new(partition: Arc<Partition>, cfg: AtomicConfig) -> Result<Self> {
        cfg.validate()?;
        let l = partition.lattice.clone();
        let n = l.n;
        let beta = cfg.alpha + cfg.t;
        let table_a = KernelTable::shared(n, cfg.alpha, TABLE_M_MAX)?;
        let table_b = KernelTable::shared(n, beta, TABLE_M_MAX)?;
        let q = cfg.norm_radius * l.r_max;
        let size = (1.0 - q).powf(-(beta + n as f64));
        let degree = table_b.truncation(q, cfg.kernel_tol * size)?;
        let engine = if n == 3 {
            Engine::Harmonic(Harmonics::new(degree)?)
        } else if l.len() <= DIRECT_LIMIT {
            Engine::Direct
        } else {
            return Err(Error::Config(format!(
                "{} centers in dimension {n}: direct sums are limited to {DIRECT_LIMIT}",
                l.len()
            )));
        };
        let measures = partition.measures(beta)?;
        let norm_table = NormTable::new(&table_b, cfg.t, l.r_max)?;
        Ok(AtomicSystem {
            partition,
            cfg,
            measures,
            norm_table,
            table_a,
            table_b,
            degree,
            engine,
            contraction: std::sync::Mutex::new(None),
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.partition.lattice
    }

    /// Kernel truncation degree used by `T` and `U`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn measures(&self) -> &[MeasureEstimate] {
        &self.measures
    }

    /// `N_m` for every center.
    pub fn normalizers(&self, mode: Normalization) -> Vec<f64> {
        let l = self.lattice();
        let p = self.cfg.alpha + l.n as f64;
        (0..l.len())
            .map(|m| {
                let ra = norm(l.center(m));
                match mode {
                    Normalization::KernelBlochNorm => self.norm_table.at(ra),
                    Normalization::WeightPower => (1.0 - ra * ra).powf(-p),
                }
            })
            .collect()
    }

    /// Contraction estimate recorded by the last calibration, if any.
    pub fn recorded_contraction(&self) -> Option<f64> {
        *self.contraction.lock().unwrap()
    }

    pub fn op_t(&self, lambda: &CoefficientSequence, mode: Normalization) -> Result<AtomicFunction> {
        let l = self.lattice();
        if lambda.len() != l.len() {
            return Err(Error::Input(format!("{} coefficients for {} centers", lambda.len(), l.len())));
        }
        let norms = self.normalizers(mode);
        let p = self.cfg.alpha + l.n as f64;
        let sup_bound_sum = (0..l.len())
            .map(|m| lambda.values[m].abs() * (1.0 - norm_sq(l.center(m))).powf(p))
            .sum();
        Ok(AtomicFunction {
            lattice: l.clone(),
            table: self.table_a.clone(),
            degree: self.degree,
            weights: lambda.values.iter().zip(&norms).map(|(v, n)| v / n).collect(),
            sup_bound_sum,
        })
    }

    /// `lambda_m = D^t_alpha f(a_m) N_m nu_{alpha+t}(E_m)`.
    pub fn op_u(&self, f: &ZonalExpansion, mode: Normalization) -> Result<CoefficientSequence> {
        let l = self.lattice();
        let dtf = dts_series(f, self.cfg.alpha, self.cfg.t)?;
        let norms = self.normalizers(mode);
        let values = (0..l.len())
            .into_par_iter()
            .map(|m| Ok(dtf.value(l.center(m))? * norms[m] * self.measures[m].value))
            .collect::<Result<Vec<f64>>>()?;
        CoefficientSequence::new(values)
    }

    /// `max ||(I - TU) f|| / ||f||` over the test set; recorded for `decompose`.
    pub fn contraction_estimate(&self, test_set: &[ZonalExpansion]) -> Result<f64> {
        if test_set.is_empty() {
            return Err(Error::Input("empty test set".into()));
        }
        let jobs: Vec<(&ZonalExpansion, Normalization)> =
            test_set.iter().map(|f| (f, self.cfg.normalization)).collect();
        let runs = self.solve(&jobs, 1, false)?;
        let est = runs
            .iter()
            .map(|d| if d.history[0] > 0.0 { d.history[1] / d.history[0] } else { 0.0 })
            .fold(0.0, f64::max);
        *self.contraction.lock().unwrap() = Some(est);
        Ok(est)
    }

    pub fn decompose(&self, f: &ZonalExpansion) -> Result<Decomposition> {
        Ok(self.decompose_batch(&[(f, self.cfg.normalization)])?.remove(0))
    }

    /// Decomposes every `(f, mode)` pair with shared sweeps. The first step
    /// doubles as the contraction estimate when none is recorded yet.
    pub fn decompose_batch(&self, jobs: &[(&ZonalExpansion, Normalization)]) -> Result<Vec<Decomposition>> {
        let out = self.run_batch(jobs)?;
        if let Some(d) = out.iter().find(|d| !d.converged) {
            return Err(Error::Convergence {
                iterations: d.history.len() - 1,
                last: *d.history.last().unwrap_or(&0.0),
                history: d.history.clone(),
            });
        }
        Ok(out)
    }

    /// As `decompose_batch`, but runs that hit the iteration cap are returned
    /// with `converged == false` instead of failing the batch.
    pub fn run_batch(&self, jobs: &[(&ZonalExpansion, Normalization)]) -> Result<Vec<Decomposition>> {
        if let Some(c) = self.recorded_contraction() {
            if c >= 1.0 {
                return Err(Error::NonContraction(c));
            }
        }
        self.solve(jobs, self.cfg.max_iterations, true)
    }

    fn grid_points(&self, grid: &BlochGrid, fs: &[&ZonalExpansion]) -> Result<Vec<f64>> {
        let n = self.lattice().n;
        let mut grid = grid.clone();
        grid.r_max = self.cfg.norm_radius;
        let include = grid.include_poles;
        grid.include_poles = false;
        let mut dirs: Vec<f64> = SphereRule::new(n, grid.sphere_degree)?.nodes;
        if include {
            for f in fs {
                for p in f.poles() {
                    if p.coeffs.len() > 1 {
                        dirs.extend_from_slice(&p.dir);
                    }
                }
            }
        }
        let mut out = vec![0.0; n];
        for r in grid.radii().into_iter().skip(1) {
            for d in dirs.chunks(n) {
                out.extend(d.iter().map(|c| r * c));
            }
        }
        Ok(out)
    }

    /// `sum_m xi_m R_beta(x, a_m)` at every point, one row per job.
    fn evaluate(&self, field: &Field, table: &KernelTable, pts: &[f64]) -> Result<DMatrix<f64>> {
        let l = self.lattice();
        let n = l.n;
        let np = pts.len() / n;
        match (field, &self.engine) {
            (Field::Moments(a), Engine::Harmonic(h)) => {
                let jobs = a.ncols();
                let ca = scaled_moments(a, &table.coeffs);
                let mut out = DMatrix::zeros(jobs, np);
                let (mut buf, mut spare) = block_buffers(h);
                for start in (0..np).step_by(BLOCK) {
                    let end = (start + BLOCK).min(np);
                    let yt = harmonic_block(h, &pts[start * n..end * n], &mut buf, &mut spare)?;
                    let mut v = DMatrix::zeros(jobs, end - start);
                    v.gemm(1.0, &ca, yt, 0.0);
                    out.columns_mut(start, end - start).copy_from(&v);
                }
                Ok(out)
            }
            (Field::Weights(w), _) => {
                let cols = pts
                    .par_chunks(n)
                    .map(|x| {
                        let mut v = vec![0.0; w.len()];
                        for m in 0..l.len() {
                            let k = table.eval_degree(x, l.center(m), self.degree)?;
                            for (vj, wj) in v.iter_mut().zip(w) {
                                *vj += wj[m] * k;
                            }
                        }
                        Ok(v)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DMatrix::from_fn(w.len(), np, |j, p| cols[p][j]))
            }
            _ => unreachable!("field and engine always match"),
        }
    }

    fn weighted_sup(&self, pts: &[f64], values: &DMatrix<f64>, reference: &DMatrix<f64>, j: usize) -> f64 {
        let n = self.lattice().n;
        pts.chunks(n)
            .enumerate()
            .map(|(p, x)| (1.0 - norm_sq(x)).powf(self.cfg.t) * (reference[(j, p)] - values[(j, p)]).abs())
            .fold(0.0, f64::max)
    }

    fn solve(&self, specs: &[(&ZonalExpansion, Normalization)], max_steps: usize, certify: bool) -> Result<Vec<Decomposition>> {
        let l = self.lattice().clone();
        let n = l.n;
        let nc = l.len();
        let (alpha, t) = (self.cfg.alpha, self.cfg.t);
        for (f, _) in specs {
            if f.dim() != n {
                return Err(Error::Input(format!("function on R^{} for a lattice in R^{n}", f.dim())));
            }
        }
        let jobs: Vec<Job> = specs
            .iter()
            .map(|(f, mode)| Ok(Job { f, dtf: dts_series(f, alpha, t)?, norms: self.normalizers(*mode) }))
            .collect::<Result<_>>()?;
        let nj = jobs.len();
        let dtf_c: Vec<Vec<f64>> = jobs
            .iter()
            .map(|j| (0..nc).into_par_iter().map(|m| j.dtf.value(l.center(m))).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let fs: Vec<&ZonalExpansion> = jobs.iter().map(|j| j.f).collect();
        let grid = self.grid_points(&self.cfg.grid, &fs)?;
        let dtf_g = fill_values(DMatrix::zeros(nj, grid.len() / n), &grid, n, |j, x| jobs[j].dtf.value(x))?;
        let mut lambda: Vec<Vec<f64>> = vec![vec![0.0; nc]; nj];
        let mut field = self.field_from(&lambda, &jobs)?;
        let mut history: Vec<Vec<f64>> = vec![Vec::new(); nj];
        let mut done = vec![false; nj];
        let mut step = 0;
        loop {
            let v = self.evaluate(&field, &self.table_b, &grid)?;
            for j in 0..nj {
                if done[j] {
                    continue;
                }
                let g = self.weighted_sup(&grid, &v, &dtf_g, j);
                history[j].push(g);
                let f0 = history[j][0];
                if g <= self.cfg.tolerance * f0 || f0 == 0.0 {
                    done[j] = true;
                }
            }
            if step == 1 && max_steps > 1 && self.recorded_contraction().is_none() {
                let est = history
                    .iter()
                    .filter(|h| h.len() > 1 && h[0] > 0.0)
                    .map(|h| h[1] / h[0])
                    .fold(0.0, f64::max);
                *self.contraction.lock().unwrap() = Some(est);
                if est >= 1.0 {
                    return Err(Error::NonContraction(est));
                }
            }
            if done.iter().all(|d| *d) || step == max_steps {
                break;
            }
            field = self.sweep(&field, &jobs, &dtf_c, &mut lambda, &done)?;
            step += 1;
        }
        let mut out = Vec::with_capacity(nj);
        let (fine, recon, fvals, dtf_f) = if certify {
            let fine = self.grid_points(&self.cfg.fine_grid, &fs)?;
            let recon = self.evaluate(&field, &self.table_a, &fine)?;
            let dv = self.evaluate(&field, &self.table_b, &fine)?;
            let fvals = fill_values(DMatrix::zeros(nj, fine.len() / n), &fine, n, |j, x| jobs[j].f.value(x))?;
            let dtf_f = fill_values(DMatrix::zeros(nj, fine.len() / n), &fine, n, |j, x| jobs[j].dtf.value(x))?;
            (fine, Some((recon, dv)), Some(fvals), Some(dtf_f))
        } else {
            (Vec::new(), None, None, None)
        };
        for j in 0..nj {
            let lam = CoefficientSequence::new(std::mem::take(&mut lambda[j]))?;
            let (mut f_norm, mut final_residual, mut reconstruction_error) = (history[j][0], *history[j].last().unwrap(), f64::NAN);
            if let (Some((recon, dv)), Some(fv), Some(df)) = (&recon, &fvals, &dtf_f) {
                let zero = DMatrix::zeros(nj, fine.len() / n);
                f_norm = self.weighted_sup(&fine, &zero, df, j);
                final_residual = self.weighted_sup(&fine, dv, df, j);
                let np = fine.len() / n;
                let sup_f = (0..np).map(|p| fv[(j, p)].abs()).fold(0.0, f64::max);
                let err = (0..np).map(|p| (fv[(j, p)] - recon[(j, p)]).abs()).fold(0.0, f64::max);
                reconstruction_error = if sup_f > 0.0 { err / sup_f } else { err };
            }
            let coefficient_ratio = if f_norm > 0.0 { lam.sup_norm() / f_norm } else { 0.0 };
            let reconstruction = recon.as_ref().map(|(rv, _)| rv.row(j).iter().cloned().collect()).unwrap_or_default();
            out.push(Decomposition {
                normalization: specs[j].1,
                lambda: lam,
                history: std::mem::take(&mut history[j]),
                converged: done[j],
                f_norm,
                final_residual,
                reconstruction_error,
                coefficient_ratio,
                reconstruction,
            });
        }
        Ok(out)
    }

    fn field_from(&self, lambda: &[Vec<f64>], jobs: &[Job]) -> Result<Field> {
        let xi: Vec<Vec<f64>> = lambda
            .iter()
            .zip(jobs)
            .map(|(lam, j)| lam.iter().zip(&j.norms).map(|(a, b)| a / b).collect())
            .collect();
        match &self.engine {
            Engine::Direct => Ok(Field::Weights(xi)),
            Engine::Harmonic(h) => {
                let l = self.lattice();
                let n = l.n;
                let nc = l.len();
                let mut a = DMatrix::zeros(h.len(), xi.len());
                if xi.iter().all(|v| v.iter().all(|c| *c == 0.0)) {
                    return Ok(Field::Moments(a));
                }
                let (mut buf, mut spare) = block_buffers(h);
                for start in (0..nc).step_by(BLOCK) {
                    let end = (start + BLOCK).min(nc);
                    let yt = harmonic_block(h, &l.centers()[start * n..end * n], &mut buf, &mut spare)?;
                    let w = DMatrix::from_fn(end - start, xi.len(), |i, j| xi[j][start + i]);
                    a.gemm(1.0, yt, &w, 1.0);
                }
                Ok(Field::Moments(a))
            }
        }
    }

    /// One Neumann step for every active job: `lambda += U g_k` with
    /// `D^t g_k(a_m) = D^t f(a_m) - D^t(T lambda)(a_m)`; returns the field of
    /// the updated coefficients.
    fn sweep(
        &self,
        field: &Field,
        jobs: &[Job],
        dtf_c: &[Vec<f64>],
        lambda: &mut [Vec<f64>],
        done: &[bool],
    ) -> Result<Field> {
        let l = self.lattice();
        let n = l.n;
        let nc = l.len();
        let nj = jobs.len();
        let update = |lambda: &mut [Vec<f64>], m: usize, j: usize, v: f64| {
            if !done[j] {
                lambda[j][m] += (dtf_c[j][m] - v) * jobs[j].norms[m] * self.measures[m].value;
            }
        };
        match (field, &self.engine) {
            (Field::Moments(a), Engine::Harmonic(h)) => {
                let cb = scaled_moments(a, &self.table_b.coeffs);
                let mut next = DMatrix::zeros(h.len(), nj);
                let (mut buf, mut spare) = block_buffers(h);
                for start in (0..nc).step_by(BLOCK) {
                    let end = (start + BLOCK).min(nc);
                    let yt = harmonic_block(h, &l.centers()[start * n..end * n], &mut buf, &mut spare)?;
                    let mut v = DMatrix::zeros(nj, end - start);
                    v.gemm(1.0, &cb, yt, 0.0);
                    for i in 0..end - start {
                        for j in 0..nj {
                            update(lambda, start + i, j, v[(j, i)]);
                        }
                    }
                    let w = DMatrix::from_fn(end - start, nj, |i, j| lambda[j][start + i] / jobs[j].norms[start + i]);
                    next.gemm(1.0, yt, &w, 1.0);
                }
                Ok(Field::Moments(next))
            }
            (Field::Weights(_), Engine::Direct) => {
                let v = self.evaluate(field, &self.table_b, l.centers())?;
                for m in 0..nc {
                    for j in 0..nj {
                        update(lambda, m, j, v[(j, m)]);
                    }
                }
                self.field_from(lambda, jobs)
            }
            _ => unreachable!("field and engine always match"),
        }
    }
}

fn scaled_moments(a: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.ncols(), a.nrows(), |j, h| coeffs[Harmonics::degree_of(h)] * a[(h, j)])
}

/// Columns of scaled harmonics for a block of points, reusing `buf` when the
/// block has the usual size.
fn harmonic_block<'a>(h: &Harmonics, pts: &[f64], buf: &'a mut DMatrix<f64>, spare: &'a mut DMatrix<f64>) -> Result<&'a DMatrix<f64>> {
    let len = h.len();
    let np = pts.len() / 3;
    let yt = if buf.ncols() == np {
        buf
    } else {
        *spare = DMatrix::zeros(len, np);
        spare
    };
    yt.as_mut_slice()
        .par_chunks_mut(len)
        .zip(pts.par_chunks(3))
        .try_for_each(|(col, x)| h.fill(x, col))?;
    Ok(yt)
}

fn block_buffers(h: &Harmonics) -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::zeros(h.len(), BLOCK), DMatrix::zeros(0, 0))
}

fn fill_values(
    mut out: DMatrix<f64>,
    pts: &[f64],
    n: usize,
    f: impl Fn(usize, &[f64]) -> Result<f64> + Sync,
) -> Result<DMatrix<f64>> {
    let nj = out.nrows();
    let cols = pts
        .par_chunks(n)
        .map(|x| (0..nj).map(|j| f(j, x)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    for (p, c) in cols.into_iter().enumerate() {
        for (j, v) in c.into_iter().enumerate() {
            out[(j, p)] = v;
        }
    }
    Ok(out)
}

/// Ten functions with low-degree content: a constant, two kernel slices, three
/// Poisson terms, two random expansions, a Poisson slice and the truncated
/// unbounded Bloch function.
pub fn standard_test_set(n: usize, alpha: f64, seed: u64) -> Result<Vec<ZonalExpansion>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = |rng: &mut ChaCha8Rng| -> Result<BoundaryPoint> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let s = norm(&v);
            if s > 0.1 && s <= 1.0 {
                return BoundaryPoint::new(v.iter().map(|c| c / s).collect());
            }
        }
    };
    let table = KernelTable::shared(n, alpha, TABLE_M_MAX)?;
    let mut set = vec![ZonalExpansion::constant(n, 1.0)];
    for rb in [0.3, 0.5] {
        let b: Vec<f64> = dir(&mut rng)?.coords().iter().map(|c| rb * c).collect();
        let k = ZonalExpansion::slice_degree(&table, rb, 0.999, 1e-12)?;
        set.push(ZonalExpansion::kernel_slice(&table, &b, k)?);
    }
    for m in [1, 3, 6] {
        set.push(ZonalExpansion::poisson_term(m, &dir(&mut rng)?));
    }
    for _ in 0..2 {
        let mut terms = Vec::new();
        for m in 0..=6 {
            let list = (0..2).map(|_| Ok((rng.random::<f64>() * 2.0 - 1.0, dir(&mut rng)?))).collect::<Result<Vec<_>>>()?;
            terms.push((m, list));
        }
        set.push(ZonalExpansion::new(n, &terms)?);
    }
    set.push(ZonalExpansion::poisson_slice(&dir(&mut rng)?, 5));
    set.push(unbounded_bloch_example(n, 8)?);
    Ok(set)
}

/// JSON-ready summary of a decomposition run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicReport {
    pub n: usize,
    pub r: f64,
    pub r_max: f64,
    pub seed: u64,
    pub centers: usize,
    pub cfg: AtomicConfig,
    pub kernel_degree: usize,
    pub contraction: Option<f64>,
    pub runs: Vec<Decomposition>,
    /// `(min, max)` of `||lambda||_inf / ||f||_B,est` per normalization.
    pub brackets: Vec<(Normalization, f64, f64)>,
}

impl AtomicSystem {
    pub fn report(&self, runs: Vec<Decomposition>) -> AtomicReport {
        let l = self.lattice();
        let mut brackets = Vec::new();
        for mode in [Normalization::KernelBlochNorm, Normalization::WeightPower] {
            let r: Vec<f64> = runs.iter().filter(|d| d.normalization == mode && d.f_norm > 0.0).map(|d| d.coefficient_ratio).collect();
            if !r.is_empty() {
                brackets.push((mode, r.iter().cloned().fold(f64::INFINITY, f64::min), r.iter().cloned().fold(0.0, f64::max)));
            }
        }
        AtomicReport {
            n: l.n,
            r: l.r,
            r_max: l.r_max,
            seed: l.seed,
            centers: l.len(),
            cfg: self.cfg.clone(),
            kernel_degree: self.degree,
            contraction: self.recorded_contraction(),
            runs,
            brackets,
        }
    }
}
