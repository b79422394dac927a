//! Python bindings for `hyperball`.

use hyperball::atomic::{self, AtomicConfig, AtomicSystem, Normalization};
use hyperball::cli::{self, SuiteConfig};
use hyperball::geometry::{self, BoundaryPoint, Point};
use hyperball::kernels;
use hyperball::lattice::{self, Partition};
use hyperball::operators::{self, BlochGrid};
use hyperball::specialfn::{self, HypergeometricParams};
use hyperball::Error;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use std::cell::RefCell;
use std::sync::Arc;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Input(_) | Error::Domain(_) | Error::Config(_) | Error::Usage(_) | Error::Coverage(_) => {
            PyValueError::new_err(msg)
        }
        Error::NumericOverflow(_) | Error::Precision(_) | Error::Evaluation { .. } | Error::Truncation { .. } => {
            PyArithmeticError::new_err(msg)
        }
        _ => PyRuntimeError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for hyperball::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(x: Vec<f64>) -> PyResult<Point> {
    Point::new(x).py()
}

fn direction(x: Vec<f64>) -> PyResult<BoundaryPoint> {
    BoundaryPoint::new(x).py()
}

fn mode(name: &str) -> PyResult<Normalization> {
    match name {
        "kernel" | "kernel_bloch_norm" => Ok(Normalization::KernelBlochNorm),
        "weight" | "weight_power" => Ok(Normalization::WeightPower),
        _ => Err(PyValueError::new_err(format!("unknown normalization `{name}`, use `kernel` or `weight`"))),
    }
}

/// `phi_a(x)`.
#[pyfunction]
fn mobius(a: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(geometry::mobius(&point(a)?, &point(x)?).py()?.into_coords())
}

#[pyfunction]
fn mobius_jacobian_det(a: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
    geometry::mobius_jacobian_det(&point(a)?, &point(x)?).py()
}

#[pyfunction]
fn bracket(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    geometry::bracket(&x, &y).py()
}

/// Pseudo-hyperbolic distance.
#[pyfunction]
fn rho(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    geometry::rho(&point(a)?, &point(b)?).py()
}

/// Hyperbolic distance.
#[pyfunction]
fn beta_dist(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    geometry::beta_dist(&point(a)?, &point(b)?).py()
}

/// Euclidean `(center, radius)` of the pseudo-hyperbolic ball `E_r(a)`.
#[pyfunction]
fn pseudo_ball(a: Vec<f64>, r: f64) -> PyResult<(Vec<f64>, f64)> {
    let e = geometry::pseudo_ball(&point(a)?, r).py()?;
    Ok((e.center, e.radius))
}

#[pyfunction]
fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> PyResult<f64> {
    specialfn::gauss_2f1(HypergeometricParams { a, b, c, z }).py()
}

/// Radial factor `S_m(r)` in dimension `n`.
#[pyfunction]
fn s_factor(n: usize, m: usize, r: f64) -> PyResult<f64> {
    specialfn::s_factor(n, m, r).py()
}

#[pyfunction]
fn s_factor_derivative(n: usize, m: usize, r: f64) -> PyResult<f64> {
    specialfn::s_factor_derivative(n, m, r).py()
}

/// Zonal harmonic `Z_m(x, y)`, homogeneous in both arguments.
#[pyfunction]
fn zonal(n: usize, m: usize, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    specialfn::zonal(n, m, &x, &y).py()
}

#[pyfunction]
fn dim_hm(n: usize, m: usize) -> u64 {
    specialfn::dim_hm(n, m)
}

#[pyfunction]
fn poisson(x: Vec<f64>, zeta: Vec<f64>) -> PyResult<f64> {
    let z = direction(zeta)?;
    if x.len() != z.dim() {
        return Err(PyValueError::new_err("dimension mismatch"));
    }
    Ok(kernels::poisson_eval(point(x)?.coords(), z.coords()))
}

/// Reproducing kernel `R_alpha` with cached coefficients.
#[pyclass(frozen)]
struct KernelTable {
    inner: Arc<kernels::KernelTable>,
}

#[pymethods]
impl KernelTable {
    #[new]
    #[pyo3(signature = (n, alpha, m_max = kernels::DEFAULT_M_MAX))]
    fn new(n: usize, alpha: f64, m_max: usize) -> PyResult<Self> {
        Ok(KernelTable { inner: kernels::KernelTable::shared(n, alpha, m_max).py()? })
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs.clone()
    }

    #[pyo3(signature = (x, y, tol = 1e-12))]
    fn eval(&self, x: Vec<f64>, y: Vec<f64>, tol: f64) -> PyResult<f64> {
        self.inner.eval(&x, &y, tol).py()
    }

    #[pyo3(signature = (x, y, tol = 1e-12))]
    fn gradient(&self, x: Vec<f64>, y: Vec<f64>, tol: f64) -> PyResult<Vec<f64>> {
        self.inner.gradient(&x, &y, tol).py()
    }

    /// Degree needed for `|x||y| <= q` at absolute tolerance `tol`.
    fn truncation(&self, q: f64, tol: f64) -> PyResult<usize> {
        self.inner.truncation(q, tol).py()
    }
}

/// Finite sum of zonal terms `S_m(|x|) Z_m(x, eta)`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct ZonalExpansion {
    inner: operators::ZonalExpansion,
}

#[pymethods]
impl ZonalExpansion {
    /// `terms` is a list of `(m, [(coefficient, direction), ...])`.
    #[new]
    fn new(n: usize, terms: Vec<(usize, Vec<(f64, Vec<f64>)>)>) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(m, list)| Ok((m, list.into_iter().map(|(c, d)| Ok((c, direction(d)?))).collect::<PyResult<Vec<_>>>()?)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(ZonalExpansion { inner: operators::ZonalExpansion::new(n, &terms).py()? })
    }

    #[staticmethod]
    fn constant(n: usize, c: f64) -> Self {
        ZonalExpansion { inner: operators::ZonalExpansion::constant(n, c) }
    }

    #[staticmethod]
    fn poisson_term(m: usize, eta: Vec<f64>) -> PyResult<Self> {
        Ok(ZonalExpansion { inner: operators::ZonalExpansion::poisson_term(m, &direction(eta)?) })
    }

    /// Partial sum of the Poisson kernel `P_h(., zeta)` through `degree`.
    #[staticmethod]
    fn poisson_slice(zeta: Vec<f64>, degree: usize) -> PyResult<Self> {
        Ok(ZonalExpansion { inner: operators::ZonalExpansion::poisson_slice(&direction(zeta)?, degree) })
    }

    /// `R_alpha(., b)` through `degree`, or through the degree reaching
    /// `tol` on `|x| <= x_max` when `degree` is omitted.
    #[staticmethod]
    #[pyo3(signature = (table, b, degree = None, x_max = 0.999, tol = 1e-12))]
    fn kernel_slice(table: &KernelTable, b: Vec<f64>, degree: Option<usize>, x_max: f64, tol: f64) -> PyResult<Self> {
        let k = match degree {
            Some(k) => k,
            None => operators::ZonalExpansion::slice_degree(&table.inner, geometry::norm(&b), x_max, tol).py()?,
        };
        Ok(ZonalExpansion { inner: operators::ZonalExpansion::kernel_slice(&table.inner, &b, k).py()? })
    }

    #[staticmethod]
    fn unbounded_bloch(n: usize, degree: usize) -> PyResult<Self> {
        Ok(ZonalExpansion { inner: operators::unbounded_bloch_example(n, degree).py()? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn max_degree(&self) -> usize {
        self.inner.max_degree()
    }

    fn terms(&self) -> Vec<(usize, Vec<(f64, Vec<f64>)>)> {
        self.inner.terms()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&x).py()
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad(&x).py()
    }

    fn __add__(&self, other: &ZonalExpansion) -> PyResult<Self> {
        Ok(ZonalExpansion { inner: self.inner.plus(&other.inner).py()? })
    }

    fn __mul__(&self, k: f64) -> Self {
        ZonalExpansion { inner: self.inner.scaled(k) }
    }

    fn __rmul__(&self, k: f64) -> Self {
        self.__mul__(k)
    }

    /// The fractional radial derivative `D^t_s` applied term by term.
    fn dts(&self, s: f64, t: f64) -> PyResult<Self> {
        Ok(ZonalExpansion { inner: operators::dts_series(&self.inner, s, t).py()? })
    }

    fn __repr__(&self) -> String {
        format!("ZonalExpansion(n={}, max_degree={})", self.inner.dim(), self.inner.max_degree())
    }
}

fn grid(spec: Option<(usize, usize, f64)>) -> BlochGrid {
    match spec {
        Some((per_octave, sphere_degree, r_max)) => BlochGrid { per_octave, sphere_degree, r_max, include_poles: true },
        None => BlochGrid::default(),
    }
}

/// Grid estimates of the Bloch seminorm, norm and weighted norms, as a dict.
#[pyfunction]
#[pyo3(signature = (f, configs = Vec::new(), grid_spec = None))]
fn bloch_norms<'py>(
    py: Python<'py>,
    f: &ZonalExpansion,
    configs: Vec<(f64, f64)>,
    grid_spec: Option<(usize, usize, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = py.detach(|| operators::bloch_norms(&f.inner, &configs, &grid(grid_spec))).py()?;
    to_py(py, &rep)
}

/// `int f (1-|x|^2)^t D^t_alpha g dnu_alpha`.
#[pyfunction]
#[pyo3(signature = (f, g, alpha, t, radial_nodes = 96))]
fn pairing(py: Python<'_>, f: &ZonalExpansion, g: &ZonalExpansion, alpha: f64, t: f64, radial_nodes: usize) -> PyResult<f64> {
    py.detach(|| operators::pairing(&f.inner, &g.inner, alpha, t, radial_nodes)).py()
}

/// Bergman projection `P_alpha f(x)` of an expansion sampled on a ball rule.
#[pyfunction]
#[pyo3(signature = (f, alpha, x, radial_nodes = 64))]
fn bergman_project(py: Python<'_>, f: &ZonalExpansion, alpha: f64, x: Vec<f64>, radial_nodes: usize) -> PyResult<f64> {
    let at = point(x)?;
    py.detach(|| {
        let n = f.inner.dim();
        let rule = Arc::new(hyperball::quadrature::BallRule::new(n, alpha, radial_nodes, 2 * f.inner.max_degree() + 2)?);
        let phi = operators::SampledFunction::from_expansion(rule, &f.inner, 0.0)?;
        let table = kernels::KernelTable::shared(n, alpha, kernels::DEFAULT_M_MAX)?;
        operators::bergman_project(&phi, table, &at, 1e-12)
    })
    .py()
}

/// Separated net with its partition `E_m`.
#[pyclass(frozen)]
struct Lattice {
    partition: Arc<Partition>,
}

#[pymethods]
impl Lattice {
    #[new]
    #[pyo3(signature = (n, r, r_max, seed = 1))]
    fn new(py: Python<'_>, n: usize, r: f64, r_max: f64, seed: u64) -> PyResult<Self> {
        let l = py.detach(|| lattice::build_lattice(n, r, r_max, seed)).py()?;
        Ok(Lattice { partition: Arc::new(Partition::new(Arc::new(l))) })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let l = lattice::lattice_from_text(text).py()?;
        Ok(Lattice { partition: Arc::new(Partition::new(Arc::new(l))) })
    }

    fn to_text(&self) -> String {
        lattice::lattice_to_text(&self.partition.lattice)
    }

    fn __len__(&self) -> usize {
        self.partition.lattice.len()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.partition.lattice.r
    }

    #[getter]
    fn r_max(&self) -> f64 {
        self.partition.lattice.r_max
    }

    fn center(&self, m: usize) -> PyResult<Vec<f64>> {
        if m >= self.partition.lattice.len() {
            return Err(PyValueError::new_err(format!("no center {m}")));
        }
        Ok(self.partition.lattice.center(m).to_vec())
    }

    fn centers(&self) -> Vec<Vec<f64>> {
        let l = &self.partition.lattice;
        (0..l.len()).map(|m| l.center(m).to_vec()).collect()
    }

    /// Index of the partition cell containing `x`.
    fn index(&self, x: Vec<f64>) -> PyResult<usize> {
        self.partition.index(point(x)?.coords()).py()
    }

    /// `(estimate, standard error)` of `nu_beta(E_m)`.
    fn measure(&self, m: usize, beta: f64) -> PyResult<(f64, f64)> {
        let e = self.partition.measure(m, beta).py()?;
        Ok((e.value, e.std_err))
    }
}

/// Atomic decomposition machinery on a lattice.
#[pyclass(frozen)]
struct Atomic {
    inner: AtomicSystem,
}

#[pymethods]
impl Atomic {
    #[new]
    #[pyo3(signature = (lattice, alpha = 0.0, t = 1.0, normalization = "kernel", max_iterations = 40, norm_radius = None))]
    fn new(
        py: Python<'_>,
        lattice: &Lattice,
        alpha: f64,
        t: f64,
        normalization: &str,
        max_iterations: usize,
        norm_radius: Option<f64>,
    ) -> PyResult<Self> {
        let mut cfg = AtomicConfig::new(alpha, t, mode(normalization)?);
        cfg.max_iterations = max_iterations;
        if let Some(r) = norm_radius {
            cfg.norm_radius = r;
            cfg.grid.r_max = r;
            cfg.fine_grid.r_max = r;
        }
        let p = lattice.partition.clone();
        Ok(Atomic { inner: py.detach(|| AtomicSystem::new(p, cfg)).py()? })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn contraction_estimate(&self, py: Python<'_>, fs: Vec<ZonalExpansion>) -> PyResult<f64> {
        let fs: Vec<operators::ZonalExpansion> = fs.into_iter().map(|f| f.inner).collect();
        py.detach(|| self.inner.contraction_estimate(&fs)).py()
    }

    /// Runs the Neumann iteration for each function under each listed
    /// normalization; returns one dict per run.
    #[pyo3(signature = (fs, modes = vec!["kernel".to_string()]))]
    fn decompose<'py>(&self, py: Python<'py>, fs: Vec<ZonalExpansion>, modes: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
        let modes = modes.iter().map(|m| mode(m)).collect::<PyResult<Vec<_>>>()?;
        let jobs: Vec<(&operators::ZonalExpansion, Normalization)> =
            fs.iter().flat_map(|f| modes.iter().map(move |&m| (&f.inner, m))).collect();
        let runs = py.detach(|| self.inner.run_batch(&jobs)).py()?;
        to_py(py, &self.inner.report(runs))
    }

    /// `(T lambda)(x)` for coefficients `lambda`.
    fn synthesize(&self, lambda: Vec<f64>, normalization: &str, x: Vec<f64>) -> PyResult<f64> {
        let seq = atomic::CoefficientSequence::new(lambda).py()?;
        self.inner.op_t(&seq, mode(normalization)?).py()?.value(&x).py()
    }
}

/// Runs a named check suite and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (name, n = 3, alpha = 0.0, t = 1.0, seed = 1, samples = 10_000, r = 0.1, r_max = 0.95, iterations = 10, tol_scale = 1.0))]
#[allow(clippy::too_many_arguments)]
fn run_suite<'py>(
    py: Python<'py>,
    name: &str,
    n: usize,
    alpha: f64,
    t: f64,
    seed: u64,
    samples: usize,
    r: f64,
    r_max: f64,
    iterations: usize,
    tol_scale: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SuiteConfig { n, alpha, t, seed, samples, r, r_max, iterations, tol_scale, ..SuiteConfig::default() };
    let report = py.detach(|| cli::run_suite(name, &cfg)).py()?;
    to_py(py, &report)
}

/// `|Delta_h f(x)|` by central differences, for any Python callable `f`.
#[pyfunction]
#[pyo3(signature = (f, x, h = 1e-3))]
fn hyperbolic_laplacian_residual(py: Python<'_>, f: Py<PyAny>, x: Vec<f64>, h: f64) -> PyResult<f64> {
    let failure: RefCell<Option<PyErr>> = RefCell::new(None);
    let out = cli::hyperbolic_laplacian_residual(
        |y| match f.call1(py, (y.to_vec(),)).and_then(|v| v.extract::<f64>(py)) {
            Ok(v) => Ok(v),
            Err(e) => {
                let msg = e.to_string();
                failure.borrow_mut().get_or_insert(e);
                Err(Error::Input(msg))
            }
        },
        &point(x)?,
        h,
    );
    match (out, failure.into_inner()) {
        (_, Some(e)) => Err(e),
        (r, None) => r.py(),
    }
}

#[pymodule]
fn pyhyperball(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mobius, m)?)?;
    m.add_function(wrap_pyfunction!(mobius_jacobian_det, m)?)?;
    m.add_function(wrap_pyfunction!(bracket, m)?)?;
    m.add_function(wrap_pyfunction!(rho, m)?)?;
    m.add_function(wrap_pyfunction!(beta_dist, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_ball, m)?)?;
    m.add_function(wrap_pyfunction!(hyp2f1, m)?)?;
    m.add_function(wrap_pyfunction!(s_factor, m)?)?;
    m.add_function(wrap_pyfunction!(s_factor_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(zonal, m)?)?;
    m.add_function(wrap_pyfunction!(dim_hm, m)?)?;
    m.add_function(wrap_pyfunction!(poisson, m)?)?;
    m.add_function(wrap_pyfunction!(bloch_norms, m)?)?;
    m.add_function(wrap_pyfunction!(pairing, m)?)?;
    m.add_function(wrap_pyfunction!(bergman_project, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(hyperbolic_laplacian_residual, m)?)?;
    m.add_class::<KernelTable>()?;
    m.add_class::<ZonalExpansion>()?;
    m.add_class::<Lattice>()?;
    m.add_class::<Atomic>()?;
    m.add("SUITES", cli::SUITES.to_vec())?;
    Ok(())
}
