//! Verification suites, machine-readable reports and the command-line entry
//! point.

pub mod suites;

use crate::atomic::AtomicReport;
use crate::error::{Error, Result};
use crate::geometry::{norm_sq, Point};
use crate::operators::BlochGrid;
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const SCHEMA: u32 = 1;

pub const SUITES: [&str; 10] = [
    "geometry",
    "specialfn",
    "quadrature",
    "kernels",
    "projection",
    "duality-pairing",
    "unbounded-bloch",
    "odd-dim-witness",
    "lattice",
    "atomic",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n: usize,
    pub alpha: f64,
    pub t: f64,
    pub seed: u64,
    /// Random instances for sampled checks.
    pub samples: usize,
    pub grid: BlochGrid,
    /// Multiplies every upper-bound tolerance.
    pub tol_scale: f64,
    /// Lattice separation.
    pub r: f64,
    /// Lattice truncation radius.
    pub r_max: f64,
    /// Neumann iteration cap for the atomic suite.
    pub iterations: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n: 3,
            alpha: 0.0,
            t: 1.0,
            seed: 1,
            samples: 10_000,
            grid: BlochGrid::default(),
            tol_scale: 1.0,
            r: 0.1,
            r_max: 0.95,
            iterations: 10,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=8).contains(&self.n) {
            return Err(Error::Config(format!("dimension {} outside 2..=8", self.n)));
        }
        if !(self.alpha > -1.0) {
            return Err(Error::Config(format!("alpha = {} must exceed -1", self.alpha)));
        }
        if !(self.t > 0.0) {
            return Err(Error::Config(format!("t = {} must be positive", self.t)));
        }
        if !(self.tol_scale > 0.0 && self.tol_scale.is_finite()) {
            return Err(Error::Config(format!("tolerance scale {} must be positive", self.tol_scale)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("at least one sample is required".into()));
        }
        if !(self.grid.r_max > 0.0 && self.grid.r_max < 1.0) || self.grid.per_octave == 0 {
            return Err(Error::Config("grid needs per_octave >= 1 and 0 < r_max < 1".into()));
        }
        Ok(())
    }

    /// An upper-bound tolerance after scaling.
    pub fn tol(&self, base: f64) -> f64 {
        base * self.tol_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Relation {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::Below => value < threshold,
            Relation::AtMost => value <= threshold,
            Relation::Above => value > threshold,
            Relation::AtLeast => value >= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::AtMost => "<=",
            Relation::Above => ">",
            Relation::AtLeast => ">=",
        }
    }
}

/// A named auxiliary measurement attached to a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub name: String,
    #[serde(with = "digits17")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub anchor: String,
    #[serde(with = "digits17")]
    pub value: f64,
    pub relation: Relation,
    #[serde(with = "digits17")]
    pub threshold: f64,
    pub pass: bool,
    pub measured: Vec<Measured>,
}

impl Check {
    pub fn new(name: &str, anchor: &str, value: f64, relation: Relation, threshold: f64) -> Self {
        Check {
            name: name.into(),
            anchor: anchor.into(),
            value,
            relation,
            threshold,
            pass: !value.is_nan() && relation.holds(value, threshold),
            measured: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.measured.push(Measured { name: name.into(), value });
        self
    }

    /// A check whose computation failed.
    pub fn failed(name: &str, anchor: &str, err: &Error) -> Self {
        let mut c = Check::new(name, anchor, f64::NAN, Relation::AtMost, 0.0);
        c.measured.push(Measured { name: format!("error: {err}"), value: f64::NAN });
        c
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} [{}]: {:e} {} {:e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.anchor,
            self.value,
            self.relation.symbol(),
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    fn current() -> Self {
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
        }
    }
}

/// Start time and wall time; the only fields that vary between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamp {
    pub unix_seconds: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub suite: String,
    pub config: SuiteConfig,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub environment: Environment,
    pub timestamp: Timestamp,
}

impl Report {
    pub fn new(suite: &str, config: SuiteConfig, checks: Vec<Check>) -> Self {
        Report {
            schema: SCHEMA,
            suite: suite.into(),
            config,
            pass: checks.iter().all(|c| c.pass),
            checks,
            environment: Environment::current(),
            timestamp: Timestamp { unix_seconds: 0, wall_seconds: 0.0 },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("report JSON: {e}")))
    }

    /// JSON with the timestamp zeroed, for reproducibility comparisons.
    pub fn content_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.timestamp = Timestamp { unix_seconds: 0, wall_seconds: 0.0 };
        r.to_json()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["suite", "check", "anchor", "value", "threshold", "pass"]).map_err(io)?;
        for c in &self.checks {
            w.write_record([
                self.suite.as_str(),
                c.name.as_str(),
                c.anchor.as_str(),
                &digits17::text(c.value),
                &digits17::text(c.threshold),
                if c.pass { "true" } else { "false" },
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Floats as JSON numbers with 17 significant digits; non-finite values as
/// the strings `NaN`, `inf`, `-inf`.
mod digits17 {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn text(v: f64) -> String {
        if v.is_nan() {
            "NaN".into()
        } else if v.is_infinite() {
            if v > 0.0 { "inf" } else { "-inf" }.into()
        } else {
            format!("{v:.16e}")
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            let raw = RawValue::from_string(text(*v)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_str(&text(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Either::deserialize(d)? {
            Either::Num(v) => Ok(v),
            Either::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Format {
    Json,
    Csv,
}

/// Writes the report; `-` is standard output.
pub fn emit(report: &Report, format: Format, path: &Path) -> Result<()> {
    let mut text = match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv()?,
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    if path == Path::new("-") {
        std::io::stdout().write_all(text.as_bytes())?;
    } else {
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// `|Delta_h f(x)|` with `Delta_h f = (1-|x|^2)^2 Delta f + 2(n-2)(1-|x|^2) <x, grad f>`,
/// both derivatives by five-point central differences of step `h`.
pub fn hyperbolic_laplacian_residual(f: impl Fn(&[f64]) -> Result<f64>, x: &Point, h: f64) -> Result<f64> {
    let c = x.coords();
    let n = c.len();
    if !(h > 0.0) || !(x.norm() + 2.0 * h < 1.0) {
        return Err(Error::Input(format!("step {h} too large at |x| = {}", x.norm())));
    }
    let f0 = f(c)?;
    let mut y = c.to_vec();
    let (mut lap, mut radial) = (0.0, 0.0);
    for i in 0..n {
        let mut at = |k: f64| {
            y[i] = c[i] + k * h;
            let v = f(&y);
            y[i] = c[i];
            v
        };
        let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
        lap += (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * f0) / (12.0 * h * h);
        radial += c[i] * (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    }
    let w = 1.0 - norm_sq(c);
    Ok((w * w * lap + 2.0 * (n as f64 - 2.0) * w * radial).abs())
}

/// Side outputs a suite can hand back besides its report.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub lattice_text: Option<String>,
    pub decomposition: Option<AtomicReport>,
}

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<Report> {
    run_suite_with(name, cfg, &mut Artifacts::default())
}

pub fn run_suite_with(name: &str, cfg: &SuiteConfig, artifacts: &mut Artifacts) -> Result<Report> {
    cfg.validate()?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let checks = match name {
        "geometry" => suites::geometry(cfg),
        "specialfn" => suites::specialfn(cfg),
        "quadrature" => suites::quadrature(cfg),
        "kernels" => suites::kernels(cfg),
        "projection" => suites::projection(cfg),
        "duality-pairing" => suites::duality_pairing(cfg),
        "unbounded-bloch" => suites::unbounded_bloch(cfg),
        "odd-dim-witness" => suites::odd_dim_witness(cfg),
        "lattice" => suites::lattice(cfg, artifacts),
        "atomic" => suites::atomic(cfg, artifacts),
        other => {
            return Err(Error::Usage(format!("unknown suite `{other}`; expected one of {}", SUITES.join(", "))))
        }
    };
    let mut report = Report::new(name, cfg.clone(), checks);
    report.timestamp = Timestamp { unix_seconds: started, wall_seconds: clock.elapsed().as_secs_f64() };
    Ok(report)
}

#[derive(Debug, Parser)]
#[command(name = "hyperball", version, about = "Run verification suites for harmonic analysis on the hyperbolic ball")]
pub struct Args {
    /// One of: geometry, specialfn, quadrature, kernels, projection,
    /// duality-pairing, unbounded-bloch, odd-dim-witness, lattice, atomic.
    #[arg(long)]
    pub suite: String,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Bloch-norm grid as `per_octave,sphere_degree,r_max`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Factor applied to every upper-bound tolerance.
    #[arg(long, default_value_t = 1.0)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Report path, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    /// Random instances for sampled checks.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Lattice separation.
    #[arg(long, default_value_t = 0.1)]
    pub r: f64,
    /// Lattice truncation radius.
    #[arg(long, default_value_t = 0.95)]
    pub r_max: f64,
    /// Neumann iteration cap for the atomic suite.
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Write the lattice (text format) built by the lattice or atomic suite.
    #[arg(long)]
    pub lattice_out: Option<PathBuf>,
    /// Write the full decomposition (JSON) computed by the atomic suite.
    #[arg(long)]
    pub decomposition_out: Option<PathBuf>,
}

fn parse_grid(spec: &str) -> Result<BlochGrid> {
    let bad = || Error::Usage(format!("grid `{spec}` is not per_octave,sphere_degree,r_max"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(BlochGrid {
        per_octave: parts[0].parse().map_err(|_| bad())?,
        sphere_degree: parts[1].parse().map_err(|_| bad())?,
        r_max: parts[2].parse().map_err(|_| bad())?,
        include_poles: true,
    })
}

impl Args {
    pub fn config(&self) -> Result<SuiteConfig> {
        let mut cfg = SuiteConfig {
            n: self.n,
            alpha: self.alpha,
            t: self.t,
            seed: self.seed,
            samples: self.samples,
            tol_scale: self.tol,
            r: self.r,
            r_max: self.r_max,
            iterations: self.iterations,
            ..SuiteConfig::default()
        };
        if let Some(g) = &self.grid {
            cfg.grid = parse_grid(g)?;
        }
        Ok(cfg)
    }
}

fn run(args: &Args) -> Result<bool> {
    let cfg = args.config()?;
    let mut artifacts = Artifacts::default();
    let report = run_suite_with(&args.suite, &cfg, &mut artifacts)?;
    for c in &report.checks {
        eprintln!("{}", c.line());
    }
    emit(&report, args.format, &args.out)?;
    if let (Some(path), Some(text)) = (&args.lattice_out, &artifacts.lattice_text) {
        std::fs::write(path, text)?;
    }
    if let (Some(path), Some(d)) = (&args.decomposition_out, &artifacts.decomposition) {
        std::fs::write(path, serde_json::to_string(d).map_err(|e| Error::Io(e.to_string()))?)?;
    }
    Ok(report.pass)
}

/// Exit status: 0 when every check passes, 1 on failed checks or errors,
/// 2 on usage errors.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ Error::Usage(_)) | Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
