//! Verification suites and their reports.
//!
//! Each suite runs a family of checks across a resolution ladder and returns a
//! [`Report`] with one entry per check plus a convergence table. Reports are
//! byte-deterministic for a fixed config: all randomness flows from the seed
//! and no timings are recorded.

use crate::beltrami::{
    adjoint_gap, contraction_bound, fueter_seed, manufactured_q, solve_from, BeltramiError, BeltramiProblem,
};
use crate::clifford::{para_blade, pq_split, CliffordError, Involution, Multivector, Paravector, MAX_N};
use crate::fields::{random_compact_field, BumpField, FieldSample, WaveField};
use crate::geometry::{build_grid, default_grid, DomainGrid, GeometryError, Kind, ManifoldSpec, ReferenceDomain};
use crate::kernels::{c_hopf, cot_cylinder, cylinder_lattice, cylinder_raw_on, g_euclid, KernelError};
use crate::operators::{adjoint_residual, borel_pompeiu_residual, DiracVariant, Discretization, OperatorError};
use crate::spectral::{
    expected_cauchy, expected_dirac, gram, product_consistency, rp_even_basis, spectrum_check_cauchy_rp,
    spectrum_check_dirac_rp, sphere_dirac_spectrum, SpectralError, SpectrumReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Radius and margin of the single-bump potentials behind the compact test fields.
const BUMP_RADIUS: f64 = 0.45;
const BUMP_MARGIN: f64 = 0.04;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("invalid configuration: {0}")]
    Usage(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Beltrami(#[from] BeltramiError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Clifford,
    BorelPompeiu,
    Isometry,
    Adjoint,
    Spectrum,
    LpBound,
    Beltrami,
}

impl SuiteName {
    pub const ALL: [SuiteName; 7] = [
        SuiteName::Clifford,
        SuiteName::BorelPompeiu,
        SuiteName::Isometry,
        SuiteName::Adjoint,
        SuiteName::Spectrum,
        SuiteName::LpBound,
        SuiteName::Beltrami,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Clifford => "clifford",
            SuiteName::BorelPompeiu => "borel-pompeiu",
            SuiteName::Isometry => "isometry",
            SuiteName::Adjoint => "adjoint",
            SuiteName::Spectrum => "spectrum",
            SuiteName::LpBound => "lp-bound",
            SuiteName::Beltrami => "beltrami",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = SuiteError;
    fn from_str(s: &str) -> Result<Self, SuiteError> {
        SuiteName::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| SuiteError::Usage(format!("unknown suite '{s}'")))
    }
}

/// Suite configuration. Missing fields in JSON fall back to the suite defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: SuiteName,
    pub manifold: Kind,
    pub n: usize,
    pub k: usize,
    pub bundle: usize,
    pub truncation: usize,
    pub resolutions: Vec<usize>,
    pub tol: f64,
    pub seed: u64,
    /// Random fields (or pairs) per resolution.
    pub samples: usize,
}

impl SuiteConfig {
    /// Defaults per suite, matching the acceptance settings.
    pub fn default_for(suite: SuiteName) -> Self {
        let base = |manifold: Kind, n: usize, resolutions: Vec<usize>, tol: f64, samples: usize| {
            let spec = ManifoldSpec::default_for(manifold, n);
            SuiteConfig {
                suite,
                manifold,
                n,
                k: spec.k,
                bundle: spec.bundle,
                truncation: spec.truncation,
                resolutions,
                tol,
                seed: 1,
                samples,
            }
        };
        match suite {
            SuiteName::Clifford => base(Kind::Euclid, 2, vec![], 1e-12, 1000),
            SuiteName::BorelPompeiu => base(Kind::Euclid, 2, vec![8, 16, 32], 0.05, 1),
            SuiteName::Isometry => base(Kind::Euclid, 2, vec![8, 16], 0.05, 10),
            SuiteName::Adjoint => base(Kind::Hyperbolic, 2, vec![16], 0.05, 20),
            SuiteName::Spectrum => base(Kind::Rp, 2, vec![32], 0.05, 1),
            SuiteName::LpBound => {
                let mut c = base(Kind::Cylinder, 4, vec![8], 0.05, 50);
                c.k = 1;
                c.bundle = 0;
                c
            }
            SuiteName::Beltrami => base(Kind::Euclid, 2, vec![16], 1e-10, 1),
        }
    }

    /// Parse a JSON config; keys absent from the document take the defaults of
    /// its `suite` (or of `fallback` when the document names no suite).
    pub fn from_json(src: &str, fallback: Option<SuiteName>) -> Result<Self, SuiteError> {
        let doc: serde_json::Value =
            serde_json::from_str(src).map_err(|e| SuiteError::Usage(format!("config is not valid JSON: {e}")))?;
        let obj = doc.as_object().ok_or_else(|| SuiteError::Usage("config must be a JSON object".into()))?;
        let suite = match obj.get("suite") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| SuiteError::Usage(format!("suite: {e}")))?,
            None => fallback.ok_or_else(|| SuiteError::Usage("config names no suite".into()))?,
        };
        let mut merged = serde_json::to_value(Self::default_for(suite)).map_err(|e| SuiteError::Encode(e.to_string()))?;
        let target = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in obj {
            if !target.contains_key(k) {
                return Err(SuiteError::Usage(format!("unknown config key '{k}'")));
            }
            target.insert(k.clone(), v.clone());
        }
        serde_json::from_value(merged).map_err(|e| SuiteError::Usage(format!("config: {e}")))
    }

    pub fn spec(&self) -> ManifoldSpec {
        ManifoldSpec { kind: self.manifold, n: self.n, bundle: self.bundle, k: self.k, truncation: self.truncation }
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.suite != SuiteName::Clifford {
            self.spec().validate()?;
            if self.resolutions.is_empty() {
                return Err(SuiteError::Usage("resolution list is empty".into()));
            }
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SuiteError::Usage("resolutions must be strictly increasing".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SuiteError::Usage(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.samples == 0 {
            return Err(SuiteError::Usage("samples must be positive".into()));
        }
        Ok(())
    }
}

/// One named check. `bound = None` marks an informational value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: Some(bound), pass: value <= bound }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: Some(bound), pass: value >= bound }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, bound: None, pass: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub h: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub suite: SuiteName,
    pub config_echo: SuiteConfig,
    pub checks: Vec<Check>,
    pub convergence: Vec<ConvergencePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Report {
    pub fn new(config: &SuiteConfig) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            suite: config.suite,
            config_echo: config.clone(),
            checks: Vec::new(),
            convergence: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> Result<String, SuiteError> {
        serde_json::to_string_pretty(self).map_err(|e| SuiteError::Encode(e.to_string()))
    }

    /// Flattened checks: header `name,value,bound,pass` and one row per check.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SuiteError> {
        let mut wr = csv::Writer::from_writer(w);
        let enc = |e: csv::Error| SuiteError::Encode(e.to_string());
        wr.write_record(["name", "value", "bound", "pass"]).map_err(enc)?;
        for c in &self.checks {
            let bound = c.bound.map(|b| format!("{b:e}")).unwrap_or_default();
            wr.write_record([c.name.clone(), format!("{:e}", c.value), bound, c.pass.to_string()])
                .map_err(enc)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W, format: Format) -> Result<(), SuiteError> {
        match format {
            Format::Json => {
                w.write_all(self.to_json()?.as_bytes())?;
                w.write_all(b"\n")?;
                Ok(())
            }
            Format::Csv => self.write_csv(w),
        }
    }
}

/// Run the suite named in `config`.
pub fn run_suite(config: &SuiteConfig) -> Result<Report, SuiteError> {
    config.validate()?;
    let mut report = Report::new(config);
    match config.suite {
        SuiteName::Clifford => clifford_suite(config, &mut report),
        SuiteName::BorelPompeiu => borel_pompeiu_suite(config, &mut report)?,
        SuiteName::Isometry => isometry_suite(config, &mut report)?,
        SuiteName::Adjoint => adjoint_suite(config, &mut report)?,
        SuiteName::Spectrum => spectrum_suite(config, &mut report)?,
        SuiteName::LpBound => lp_bound_suite(config, &mut report)?,
        SuiteName::Beltrami => beltrami_suite(config, &mut report)?,
    }
    Ok(report)
}

// ---------- clifford ----------

fn random_mv(rng: &mut ChaCha8Rng, n: usize) -> Multivector {
    let coeffs = (0..1usize << n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Multivector::new(n, coeffs).expect("dimension in range")
}

fn clifford_suite(config: &SuiteConfig, report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generators: f64 = 0.0;
    let mut involutions: f64 = 0.0;
    let mut pq: f64 = 0.0;
    let mut inverses: f64 = 0.0;
    for t in 0..config.samples {
        let n = 1 + t % MAX_N;
        let i = rng.random_range(1..=n);
        let j = rng.random_range(1..=n);
        let (ei, ej) = (Multivector::e(n, i), Multivector::e(n, j));
        let mut anti = &(&ei * &ej) + &(&ej * &ei);
        if i == j {
            anti += &Multivector::scalar(n, 2.0);
        }
        generators = generators.max(anti.norm());

        let a = random_mv(&mut rng, n);
        let scale = a.norm().max(1.0);
        for kind in Involution::ALL {
            involutions = involutions.max(a.involution(kind).involution(kind).max_abs_diff(&a) / scale);
        }
        let (p, q, _) = pq_split(&a);
        pq = pq.max((p.norm2() + q.norm2() - a.norm2()).abs() / a.norm2().max(1.0));

        let x = Paravector((0..=n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let xi = x.invert().expect("random paravector is nonzero");
        let one = Multivector::scalar(n, 1.0);
        let right = (&x.embed() * &xi).max_abs_diff(&one);
        let left = (&xi * &x.embed()).max_abs_diff(&one);
        inverses = inverses.max(right.max(left));
    }
    let tol = config.tol;
    report.checks.push(Check::info("random_trials", config.samples as f64));
    report.checks.push(Check::at_most("generator_relations", generators, tol));
    report.checks.push(Check::at_most("involution_involutivity", involutions, tol));
    report.checks.push(Check::at_most("pq_norm_split", pq, tol));
    report.checks.push(Check::at_most("paravector_inverse", inverses, tol));
}

// ---------- shared helpers ----------

fn grid_for(spec: &ManifoldSpec, res: usize) -> Result<DomainGrid, SuiteError> {
    Ok(default_grid(spec, res)?)
}

/// Observed orders `log(r_i / r_{i+1}) / log(h_i / h_{i+1})` along a ladder.
pub fn observed_orders(points: &[ConvergencePoint]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[0].residual / w[1].residual).ln() / (w[0].h / w[1].h).ln())
        .collect()
}

fn push_ladder_checks(report: &mut Report, label: &str, points: &[ConvergencePoint], tol: f64) {
    for (i, o) in observed_orders(points).into_iter().enumerate() {
        report.checks.push(Check::at_least(format!("{label}_order[{}]", i + 1), o, 1.0));
    }
    if let Some(last) = points.last() {
        report.checks.push(Check::at_most(format!("{label}_final"), last.residual, tol));
    }
}

/// Smooth test field for Borel-Pompeiu: plane-wave sums with boundary data on
/// geometries with a boundary or a closed surface, compact bumps on the
/// periodic and Hopf quotients.
fn bp_field(spec: &ManifoldSpec, grid: &DomainGrid, seed: u64) -> FieldSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        Kind::Cylinder | Kind::Hopf => {
            let mut f = random_compact_field(grid, &mut rng, 1, BUMP_RADIUS, BUMP_MARGIN).sample(grid);
            f.boundary = Some(vec![0.0; grid.faces.len() << spec.n]);
            f
        }
        _ => {
            let parity = (spec.kind == Kind::Rp).then(|| spec.rp_parity());
            WaveField::random(&mut rng, spec.n, 3).sample(grid, parity)
        }
    }
}

// ---------- borel-pompeiu ----------

fn borel_pompeiu_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    let spec = config.spec();
    for &res in &config.resolutions {
        let grid = grid_for(&spec, res)?;
        let disc = Discretization::new(&grid);
        let f = bp_field(&spec, &grid, config.seed);
        let rep = borel_pompeiu_residual(&disc, &f, config.tol)?;
        report.checks.push(Check::info(format!("relative_residual[res={res}]"), rep.relative_l2));
        report.convergence.push(ConvergencePoint { h: grid.h, residual: rep.relative_l2 });
    }
    let points = report.convergence.clone();
    push_ladder_checks(report, "borel_pompeiu", &points, config.tol);
    if matches!(spec.kind, Kind::Cylinder | Kind::Hopf) {
        report.checks.extend(kernel_consistency(&spec, config.seed, 20)?);
    }
    Ok(())
}

/// Truncation and periodicity checks for the cylinder and Hopf series kernels.
///
/// Doubling: `|K_R - K_{2R}| <= err_R`. Periodicity on a cylinder: shifting `x`
/// by a lattice generator multiplies the kernel by the bundle sign, within
/// twice the larger truncation error. On a Hopf manifold the dilation generator
/// shifts the series index: `S_K(2x, 2y) + G(x - y) = S_K(x, y) + G(2^{K+1}(x - y))`
/// for the Euclidean part `S_K = sum_{k<=K} G(2^k (x - y))`.
pub fn kernel_consistency(spec: &ManifoldSpec, seed: u64, samples: usize) -> Result<Vec<Check>, SuiteError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b65726e);
    let n = spec.n;
    let mut doubling: f64 = 0.0;
    let mut periodicity: f64 = 0.0;
    let mut max_err: f64 = 0.0;
    let draw = |rng: &mut ChaCha8Rng| -> Paravector {
        match spec.kind {
            Kind::Hopf => loop {
                let v: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (1.0..2.0).contains(&r) {
                    break Paravector(v);
                }
            },
            _ => Paravector((0..=n).map(|_| rng.random_range(-0.5..0.5)).collect()),
        }
    };
    match spec.kind {
        Kind::Cylinder => {
            for _ in 0..samples {
                let x = draw(&mut rng);
                let y = draw(&mut rng);
                let k = cot_cylinder(&x, &y, spec)?;
                let k2 = cot_cylinder(&x, &y, &spec.with_truncation(2 * spec.truncation))?;
                let err = k.truncation_error;
                max_err = max_err.max(err);
                doubling = doubling.max(k.value.max_abs_diff(&k2.value) / err);
                for a in 0..spec.k {
                    let mut xs = x.clone();
                    xs.0[a] += 1.0;
                    let mut m = vec![0i64; spec.k];
                    m[a] = 1;
                    let ks = cot_cylinder(&xs, &y, spec)?;
                    let expect = &k.value * spec.lattice_sign(&m);
                    let e2 = 2.0 * ks.truncation_error.max(err);
                    periodicity = periodicity.max(ks.value.max_abs_diff(&expect) / e2);
                }
            }
        }
        Kind::Hopf => {
            let big_k = spec.truncation as i32;
            let series = |x: &Paravector, y: &Paravector, kmax: i32| -> Result<Multivector, SuiteError> {
                let mut s = Multivector::zero(n);
                for k in 0..=kmax {
                    let t = 2f64.powi(k);
                    s += &g_euclid(&x.scale(t), &y.scale(t))?.value;
                }
                Ok(s)
            };
            for _ in 0..samples {
                let x = draw(&mut rng);
                let y = draw(&mut rng);
                let c = c_hopf(&x, &y, spec)?;
                let c2 = c_hopf(&x, &y, &spec.with_truncation(2 * spec.truncation))?;
                let err = c.truncation_error;
                max_err = max_err.max(err);
                doubling = doubling.max(c.value.max_abs_diff(&c2.value) / err);
                let shifted = &series(&x.scale(2.0), &y.scale(2.0), big_k)? + &g_euclid(&x, &y)?.value;
                let base = series(&x, &y, big_k)?;
                periodicity = periodicity.max(shifted.max_abs_diff(&base) / (2.0 * err));
            }
        }
        _ => return Ok(Vec::new()),
    }
    Ok(vec![
        Check::info("kernel_truncation_error_max", max_err),
        Check::at_most("kernel_doubling_over_error", doubling, 1.0),
        Check::at_most("kernel_periodicity_over_2error", periodicity, 1.0),
    ])
}

// ---------- isometry ----------

/// Test fields for the isometry: `f = A g` with `A` the primary Dirac operator
/// and `g` a single random bump (compact), or parity-adapted plane waves on the
/// spherical grids.
fn isometry_field(spec: &ManifoldSpec, grid: &DomainGrid, disc: &Discretization<'_>, bump: Option<&BumpField>, wave: &WaveField) -> Result<FieldSample, SuiteError> {
    match bump {
        Some(b) => Ok(disc.dirac(DiracVariant::primary(spec.kind), &b.sample(grid))?),
        None => {
            let parity = (spec.kind == Kind::Rp).then(|| spec.rp_parity());
            let mut f = wave.sample(grid, parity);
            f.boundary = None;
            Ok(f)
        }
    }
}

fn isometry_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    let spec = config.spec();
    if spec.kind == Kind::Euclid && spec.n == 1 {
        return complex_plane_suite(config, report);
    }
    let first = grid_for(&spec, config.resolutions[0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bumps: Vec<Option<BumpField>> = (0..config.samples)
        .map(|_| (!spec.kind.is_spherical()).then(|| random_compact_field(&first, &mut rng, 1, BUMP_RADIUS, BUMP_MARGIN)))
        .collect();
    let waves: Vec<WaveField> = (0..config.samples).map(|_| WaveField::random(&mut rng, spec.n, 3)).collect();
    let mut defects = Vec::new();
    for &res in &config.resolutions {
        let grid = grid_for(&spec, res)?;
        let disc = Discretization::new(&grid);
        let mut worst: f64 = 0.0;
        for (b, w) in bumps.iter().zip(&waves) {
            let f = isometry_field(&spec, &grid, &disc, b.as_ref(), w)?;
            let pf = disc.pi(&f)?;
            worst = worst.max((disc.dot(&pf, &pf) / disc.dot(&f, &f) - 1.0).abs());
        }
        let name = format!("isometry_defect[res={res}]");
        report.checks.push(if res >= 16 { Check::at_most(name, worst, config.tol) } else { Check::info(name, worst) });
        report.convergence.push(ConvergencePoint { h: grid.h, residual: worst });
        defects.push(worst);
    }
    if defects.len() > 1 {
        let ratio = defects.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        report.checks.push(Check::at_most("isometry_refinement_ratio", ratio, 1.0));
    }
    Ok(())
}

/// Max-norm error of `Π(∂̄g) - ∂g` at `n = 1` for `g = (1 - |z|^2)^2` on the
/// unit disk (zero outside), on the box `[-5/4, 5/4]^2`. Returns `(error, h)`.
pub fn complex_plane_check(resolution: usize) -> Result<(f64, f64), SuiteError> {
    let spec = ManifoldSpec::euclid(1);
    let domain = ReferenceDomain::Box { lo: vec![-1.25; 2], hi: vec![1.25; 2] };
    let grid = build_grid(&spec, &domain, resolution)?;
    let disc = Discretization::new(&grid);
    let grad = |x: &[f64]| {
        let s = 1.0 - x[0] * x[0] - x[1] * x[1];
        if s <= 0.0 {
            (0.0, 0.0)
        } else {
            (-4.0 * x[0] * s, -4.0 * x[1] * s)
        }
    };
    // With z = x0 + x1 e1: dbar = (d0 + e1 d1) / 2 and d = (d0 - e1 d1) / 2.
    let f = FieldSample::from_fn(&grid, false, |x, o| {
        let (a, b) = grad(x);
        o[0] = 0.5 * a;
        o[1] = 0.5 * b;
    });
    let want = FieldSample::from_fn(&grid, false, |x, o| {
        let (a, b) = grad(x);
        o[0] = 0.5 * a;
        o[1] = -0.5 * b;
    });
    let err = disc.pi(&f)?.axpy(-1.0, &want).sup_norm();
    Ok((err, grid.h))
}

fn complex_plane_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    for &res in &config.resolutions {
        let (err, h) = complex_plane_check(res)?;
        report.checks.push(Check::at_most(format!("complex_pi_max_error[res={res}]"), err, 10.0 * h));
        report.convergence.push(ConvergencePoint { h, residual: err });
    }
    Ok(())
}

// ---------- adjoint ----------

/// `|scalar <P f, Q(g) e_n>| / (|f| |g|)` summed over the grid with the
/// inner-product weights, maximized over the pairs.
pub fn orthogonality_defect(disc: &Discretization<'_>, pairs: &[(FieldSample, FieldSample)]) -> f64 {
    let n = disc.n();
    let dim = disc.dim();
    let en = Multivector::e(n, n);
    let mut worst: f64 = 0.0;
    for (f, g) in pairs {
        let mut pf = FieldSample::zeros(disc.grid);
        let mut qg = FieldSample::zeros(disc.grid);
        for c in 0..disc.grid.len() {
            let (p, _, _) = pq_split(&f.multivector(c));
            let (_, q, _) = pq_split(&g.multivector(c));
            let qe = &q * &en;
            pf.values[c * dim..(c + 1) * dim].copy_from_slice(p.coeffs());
            qg.values[c * dim..(c + 1) * dim].copy_from_slice(qe.coeffs());
        }
        let v = disc.dot(&pf, &qg).abs() / (disc.norm(f) * disc.norm(g));
        worst = worst.max(v);
    }
    worst
}

/// The two composition identities of Π with the Dirac pair on compactly
/// supported `f`: `|A Π f - bar(A) f| / |f|` and `|Π A f - bar(A) f| / |f|`
/// (the boundary term vanishes for compact support). Maximized over `fields`.
pub fn composition_defects(disc: &Discretization<'_>, fields: &[FieldSample]) -> Result<(f64, f64), SuiteError> {
    let kind = disc.grid.spec.kind;
    let (a, abar) = (DiracVariant::primary(kind), DiracVariant::conjugate(kind));
    let mut left: f64 = 0.0;
    let mut right: f64 = 0.0;
    for f in fields {
        let nf = disc.norm(f);
        let target = disc.dirac(abar, f)?;
        let api = disc.dirac(a, &disc.pi(f)?)?;
        let pia = disc.pi(&disc.dirac(a, f)?)?;
        left = left.max(disc.norm(&api.axpy(-1.0, &target)) / nf);
        right = right.max(disc.norm(&pia.axpy(-1.0, &target)) / nf);
    }
    Ok((left, right))
}

fn adjoint_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    let spec = config.spec();
    let variant = match spec.kind {
        Kind::Hyperbolic => DiracVariant::M,
        Kind::Euclid => DiracVariant::D0,
        k => return Err(SuiteError::Usage(format!("adjoint suite needs euclid or hyperbolic, got {}", k.name()))),
    };
    let first = grid_for(&spec, config.resolutions[0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = || random_compact_field(&first, &mut rng, 1, BUMP_RADIUS, BUMP_MARGIN);
    let bumps: Vec<(BumpField, BumpField)> = (0..config.samples).map(|_| (draw(), draw())).collect();
    for &res in &config.resolutions {
        let grid = grid_for(&spec, res)?;
        let disc = Discretization::new(&grid);
        let pairs: Vec<(FieldSample, FieldSample)> =
            bumps.iter().map(|(a, b)| (a.sample(&grid), b.sample(&grid))).collect();
        let adj = adjoint_residual(&disc, variant, &pairs, config.tol)?;
        report.checks.push(Check::at_most(format!("adjoint_defect[res={res}]"), adj.relative_l2, config.tol));
        if spec.kind == Kind::Hyperbolic {
            let ortho = orthogonality_defect(&disc, &pairs);
            report.checks.push(Check::at_most(format!("pq_orthogonality[res={res}]"), ortho, 1e-10));
        }
        let fields: Vec<FieldSample> = pairs.into_iter().map(|p| p.0).collect();
        let (left, right) = composition_defects(&disc, &fields)?;
        report.checks.push(Check::at_most(format!("dirac_pi_identity[res={res}]"), left, config.tol));
        report.checks.push(Check::at_most(format!("pi_dirac_identity[res={res}]"), right, config.tol));
        report.convergence.push(ConvergencePoint { h: grid.h, residual: left });
    }
    Ok(())
}

// ---------- spectrum ----------

fn push_spectrum(report: &mut Report, rep: &SpectrumReport, expected: &[f64], tol: f64) {
    for e in expected {
        let nearest = rep
            .rows
            .iter()
            .map(|r| ((r.computed_re - e).powi(2) + r.computed_im.powi(2)).sqrt() / e.abs())
            .fold(f64::INFINITY, f64::min);
        report.checks.push(Check::at_most(format!("{}_eigenvalue[{e}]", rep.name), nearest, tol));
    }
}

fn spectrum_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    let spec = config.spec();
    let res = *config.resolutions.last().expect("validated");
    match spec.kind {
        Kind::Rp => {
            if spec.n != 2 || spec.bundle != 1 {
                return Err(SuiteError::Usage("spectrum checks are defined on rp with n = 2, bundle 1".into()));
            }
            let m_max = 1;
            let grid = grid_for(&spec, res)?;
            let disc = Discretization::new(&grid);
            let basis = rp_even_basis(&disc, m_max)?;
            let g = gram(&disc, &basis);
            let gram_err = (&g - nalgebra::DMatrix::identity(g.nrows(), g.ncols())).amax();
            report.checks.push(Check::at_most("gram_identity", gram_err, 1e-8));
            let d = spectrum_check_dirac_rp(2, m_max, res)?;
            let t = spectrum_check_cauchy_rp(2, m_max, res)?;
            push_spectrum(report, &d, &expected_dirac(2, m_max), config.tol);
            push_spectrum(report, &t, &expected_cauchy(2, m_max), config.tol);
            for (lambda, p) in expected_dirac(2, m_max).into_iter().zip(product_consistency(&d, &t, 2, m_max)) {
                report.checks.push(Check::at_most(format!("product[{lambda}]"), (p - 2.0).abs() / 2.0, 0.1));
            }
        }
        Kind::Sphere => {
            if spec.n != 2 {
                return Err(SuiteError::Usage("sphere spectra are computed for n = 2".into()));
            }
            let s = sphere_dirac_spectrum(res, 2)?;
            for (i, r) in s.rows.iter().enumerate() {
                report.checks.push(Check::info(format!("sphere_dirac_eigenvalue[{i}].re"), r.computed_re));
                report.checks.push(Check::info(format!("sphere_dirac_eigenvalue[{i}].im"), r.computed_im));
            }
        }
        k => return Err(SuiteError::Usage(format!("spectrum suite needs rp or sphere, got {}", k.name()))),
    }
    Ok(())
}

// ---------- lp-bound ----------

/// Conjugate exponent maximum `p* = max(p, p / (p - 1))`.
pub fn p_star(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

fn lp_bound_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    let spec = config.spec();
    if !matches!(spec.kind, Kind::Cylinder | Kind::Hopf) {
        return Err(SuiteError::Usage("lp-bound suite needs cylinder or hopf".into()));
    }
    let ps = [1.5, 2.0, 3.0];
    for &res in &config.resolutions {
        let grid = grid_for(&spec, res)?;
        let disc = Discretization::new(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut worst = [0.0f64; 3];
        for _ in 0..config.samples {
            let f = random_compact_field(&grid, &mut rng, 1, BUMP_RADIUS, BUMP_MARGIN).sample(&grid);
            let pf = disc.pi(&f)?;
            for (w, p) in worst.iter_mut().zip(ps) {
                *w = w.max(disc.lp_norm(&pf, p) / disc.lp_norm(&f, p));
            }
        }
        for (w, p) in worst.iter().zip(ps) {
            let bound = (spec.n as f64 + 1.0) * (p_star(p) - 1.0);
            report.checks.push(Check::at_most(format!("lp_ratio[p={p},res={res}]"), *w, bound));
        }
        report.checks.push(Check::at_most(format!("l2_ratio_near_isometry[res={res}]"), worst[1], 1.05));
        report.convergence.push(ConvergencePoint { h: grid.h, residual: (worst[1] - 1.0).abs() });
    }
    Ok(())
}

// ---------- beltrami ----------

/// Monogenic seed for the manufactured problem. `z_1 = x_1 - x_0 e_1` is
/// annihilated by `D_0` and, having no `e_n` part, by `M`. On a cylinder a
/// seed independent of the periodic axes is killed by both Dirac operators, so
/// the truncated lattice kernel with its pole outside the box is used instead;
/// it carries the bundle twist by construction.
pub fn beltrami_seed(grid: &DomainGrid) -> FieldSample {
    let n = grid.spec.n;
    if grid.spec.kind == Kind::Cylinder {
        let spec = &grid.spec;
        let mut pole = vec![0.0; n + 1];
        pole[0] = 0.5;
        pole[spec.k] = 1.0;
        let lattice = cylinder_lattice(spec);
        return FieldSample::from_fn(grid, !grid.faces.is_empty(), |x, o| {
            o.iter_mut().for_each(|v| *v = 0.0);
            let d: Vec<f64> = x.iter().zip(&pole).map(|(a, b)| a - b).collect();
            let mut c = vec![0.0; n + 1];
            cylinder_raw_on(&d, &lattice, n as i32 + 1, &mut c);
            for (i, v) in c.iter().enumerate() {
                o[para_blade(i)] = *v;
            }
        });
    }
    let mut c0 = vec![0.0; 1 << n];
    c0[0] = 1.0;
    fueter_seed(grid, &[c0])
}

/// Manufactured Beltrami problem: seed `phi` (Fueter variable), target
/// `f* = phi + T h*` with a small bump `h*`, coefficient `q* = (D f*)(bar(D) f*)^{-1}`
/// clipped to sup-norm 0.3.
fn beltrami_suite(config: &SuiteConfig, report: &mut Report) -> Result<(), SuiteError> {
    let spec = config.spec();
    if !matches!(spec.kind, Kind::Euclid | Kind::Cylinder | Kind::Hyperbolic) {
        return Err(SuiteError::Usage("beltrami suite needs euclid, cylinder or hyperbolic".into()));
    }
    for &res in &config.resolutions {
        let grid = grid_for(&spec, res)?;
        let disc = Discretization::new(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let phi = beltrami_seed(&grid);
        let hstar = random_compact_field(&grid, &mut rng, 1, BUMP_RADIUS, BUMP_MARGIN).sample(&grid).scale(0.1);
        let fstar = phi.axpy(1.0, &disc.cauchy(&hstar)?);
        let q = manufactured_q(&disc, &fstar, 0.3)?;
        let problem = BeltramiProblem { q: q.clone(), phi: phi.clone(), tol: config.tol, max_iter: 200 };
        let bound = contraction_bound(&disc, &q)?;
        let tag = |s: &str| format!("{s}[res={res}]");
        report.checks.push(Check::at_most(tag("q_sup_norm"), q.sup_norm(), 0.3));
        report.checks.push(Check::at_most(tag("contraction_bound"), bound, 1.0 - f64::EPSILON));
        let first = solve_from(&disc, &problem, None, bound);
        let (f, _, trace) = match first {
            Ok(v) => v,
            Err(BeltramiError::Diverged(t)) => {
                report.checks.push(Check::at_most(tag("diverged_after"), t.iterations as f64, 0.0));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        report.checks.push(Check::at_least(tag("converged"), f64::from(u8::from(trace.converged)), 1.0));
        let ratio = trace.fitted_ratio().unwrap_or(0.0);
        report.checks.push(Check::at_most(tag("fitted_ratio"), ratio, bound + 0.05));
        report.checks.push(Check::at_most(tag("manufactured_residual"), trace.final_residual, 10.0 * grid.h));
        let (rec, _, _) = disc.interior_norms(&f.axpy(-1.0, &fstar));
        let (refn, _, _) = disc.interior_norms(&fstar);
        report.checks.push(Check::info(tag("recovery_error"), rec / refn));
        let h0 = random_compact_field(&grid, &mut rng, 2, 0.3, BUMP_MARGIN).sample(&grid);
        match solve_from(&disc, &problem, Some(&h0), bound) {
            Ok((f2, _, _)) => {
                let diff = disc.norm(&f2.axpy(-1.0, &f));
                report.checks.push(Check::at_most(tag("initialization_gap"), diff, 2.0 * config.tol));
            }
            Err(BeltramiError::Diverged(t)) => {
                report.checks.push(Check::at_most(tag("second_init_diverged_after"), t.iterations as f64, 0.0));
            }
            Err(e) => return Err(e.into()),
        }
        report.checks.push(Check::info(tag("adjoint_gap"), adjoint_gap(&disc)?));
        report.convergence.push(ConvergencePoint { h: grid.h, residual: trace.final_residual });
    }
    Ok(())
}
