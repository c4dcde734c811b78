//! Beltrami equations `D f = q bar(D) f` solved by the fixed-point scheme
//! `h = q (bar(D) phi + Π h)`, `f = phi + T h`.

use crate::clifford::algebra;
use crate::fields::FieldSample;
use crate::geometry::{default_grid, DomainGrid, GeometryError, Kind, ManifoldSpec};
use crate::operators::{DiracVariant, Discretization, OperatorError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BeltramiError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("iteration diverged after {} steps", .0.iterations)]
    Diverged(Box<SolveTrace>),
    #[error("seed is not monogenic: Dirac residual {residual:e} exceeds {bound:e}")]
    SeedNotMonogenic { residual: f64, bound: f64 },
    #[error("expression error: {0}")]
    Expression(String),
    #[error("problem file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Beltrami problem on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeltramiProblem {
    pub q: FieldSample,
    pub phi: FieldSample,
    pub tol: f64,
    pub max_iter: usize,
}

/// Iteration record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    pub update_norms: Vec<f64>,
    pub final_residual: f64,
    pub contraction_bound: f64,
    pub certified: bool,
    pub converged: bool,
    /// Measured `|<A f, g> + <f, bar(D) g>|` gap between the adjoint of `D` and
    /// `-bar(D)` on the grid (one random pair).
    pub adjoint_gap: f64,
}

impl SolveTrace {
    /// Least-squares geometric ratio of the update norms (tail after the first step).
    pub fn fitted_ratio(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .update_norms
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, v)| **v > 0.0 && v.is_finite())
            .map(|(i, v)| (i as f64, v.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        Some(slope.exp())
    }

    /// CSV with header `iteration,update_norm`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BeltramiError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "update_norm"]).map_err(|e| BeltramiError::Format(e.to_string()))?;
        for (i, v) in self.update_norms.iter().enumerate() {
            wr.write_record([(i + 1).to_string(), format!("{v:e}")]).map_err(|e| BeltramiError::Format(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Estimate of the discrete operator norm of Π.
///
/// Box geometries with translation-invariant kernels use power iteration on
/// `Π^T Π` with the exact discrete transpose; the other geometries fall back to
/// power iteration on Π itself, which estimates its spectral radius.
pub fn pi_norm_estimate(disc: &Discretization<'_>, iterations: usize, seed: u64) -> Result<f64, BeltramiError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = disc.grid;
    let mut v = FieldSample::from_values(grid.spec.n, (0..grid.len() << grid.spec.n).map(|_| rng.sample(StandardNormal)).collect());
    let exact = matches!(grid.spec.kind, Kind::Euclid | Kind::Cylinder | Kind::Hopf);
    let plain = |f: &FieldSample| f.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut est: f64 = 0.0;
    for _ in 0..iterations {
        if exact {
            // cell weights are uniform here, so the Euclidean transpose is the adjoint
            let nv = plain(&v);
            v = v.scale(1.0 / nv);
            let pv = disc.pi(&v)?;
            est = plain(&pv);
            v = disc.pi_transpose(&pv)?;
        } else {
            let nv = disc.norm(&v);
            v = v.scale(1.0 / nv);
            v = disc.pi(&v)?;
            est = disc.norm(&v);
        }
        if !est.is_finite() || est == 0.0 {
            break;
        }
    }
    Ok(est)
}

/// Certified bound `q_inf * max(Π̂, 1)`.
pub fn contraction_bound(disc: &Discretization<'_>, q: &FieldSample) -> Result<f64, BeltramiError> {
    let qinf = q.sup_norm();
    if qinf == 0.0 {
        return Ok(0.0);
    }
    let pi_hat = pi_norm_estimate(disc, 50, 0x5eed)?;
    Ok(qinf * pi_hat.max(1.0))
}

/// Same bound with a precomputed estimate of Π̂.
pub fn contraction_bound_with(q: &FieldSample, pi_hat: f64) -> f64 {
    q.sup_norm() * pi_hat.max(1.0)
}

/// `|D f - q bar(D) f|` in L2 over cells at distance at least 3h from the boundary.
pub fn residual(disc: &Discretization<'_>, f: &FieldSample, q: &FieldSample) -> Result<f64, BeltramiError> {
    let kind = disc.grid.spec.kind;
    let df = disc.dirac(DiracVariant::primary(kind), f)?;
    let dbf = disc.dirac(DiracVariant::conjugate(kind), f)?;
    let r = df.axpy(-1.0, &dbf.left_mul(q));
    Ok(disc.interior_norms(&r).0)
}

/// Interior L2 norm of the seed's Dirac image (the certification divides it by
/// the interior norm of the seed).
pub fn seed_residual(disc: &Discretization<'_>, phi: &FieldSample) -> Result<f64, BeltramiError> {
    let d = disc.dirac(DiracVariant::primary(disc.grid.spec.kind), phi)?;
    Ok(disc.interior_norms(&d).0)
}

/// Run the fixed-point iteration from `h0` (zero when `None`).
pub fn solve_from(
    disc: &Discretization<'_>,
    problem: &BeltramiProblem,
    h0: Option<&FieldSample>,
    bound: f64,
) -> Result<(FieldSample, FieldSample, SolveTrace), BeltramiError> {
    let kind = disc.grid.spec.kind;
    let dbar_phi = disc.dirac(DiracVariant::conjugate(kind), &problem.phi)?;
    let mut h = h0.cloned().unwrap_or_else(|| FieldSample::zeros(disc.grid));
    let mut trace = SolveTrace { contraction_bound: bound, certified: bound < 1.0, ..Default::default() };
    let mut growth = 0;
    for _ in 0..problem.max_iter.max(1) {
        let next = dbar_phi.axpy(1.0, &disc.pi(&h)?).left_mul(&problem.q);
        let upd = disc.norm(&next.axpy(-1.0, &h));
        if let Some(prev) = trace.update_norms.last() {
            growth = if upd > *prev { growth + 1 } else { 0 };
        }
        trace.update_norms.push(upd);
        trace.iterations += 1;
        h = next;
        if !upd.is_finite() || growth >= 5 {
            return Err(BeltramiError::Diverged(Box::new(trace)));
        }
        if upd <= problem.tol {
            trace.converged = true;
            break;
        }
    }
    let f = problem.phi.axpy(1.0, &disc.cauchy(&h)?);
    trace.final_residual = residual(disc, &f, &problem.q)?;
    Ok((f, h, trace))
}

/// Solve from `h0 = 0` with the certified bound computed on the fly.
pub fn solve(disc: &Discretization<'_>, problem: &BeltramiProblem) -> Result<(FieldSample, SolveTrace), BeltramiError> {
    let bound = contraction_bound(disc, &problem.q)?;
    let (f, _, mut trace) = solve_from(disc, problem, None, bound)?;
    trace.adjoint_gap = adjoint_gap(disc)?;
    Ok((f, trace))
}

/// Measured gap between the adjoint of the primary Dirac operator and minus its
/// conjugate, on one compactly supported pair.
pub fn adjoint_gap(disc: &Discretization<'_>) -> Result<f64, BeltramiError> {
    use rand::SeedableRng;
    let grid = disc.grid;
    if grid.cartesian().is_none() {
        return Ok(f64::NAN);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xad);
    let f = crate::fields::random_compact_field(grid, &mut rng, 1, 0.3, 0.05).sample(grid);
    let g = crate::fields::random_compact_field(grid, &mut rng, 1, 0.3, 0.05).sample(grid);
    let kind = grid.spec.kind;
    let a = disc.dot(&disc.dirac(DiracVariant::primary(kind), &f)?, &g);
    let b = disc.dot(&f, &disc.dirac(DiracVariant::conjugate(kind), &g)?);
    Ok((a + b).abs() / (disc.norm(&f) * disc.norm(&g)))
}

/// Pointwise right quotient `a b^{-1}` in `Cl_n` (None where `b` is singular).
pub fn right_quotient(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let alg = algebra(n);
    let dim = 1 << n;
    // right multiplication by b as a matrix: (x b)_k = sum_j R_kj x_j
    let mut r = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        let mut out = vec![0.0; dim];
        alg.mul_acc(&e, b, &mut out);
        for k in 0..dim {
            r[(k, j)] = out[k];
        }
    }
    let lu = r.lu();
    if lu.determinant().abs() < 1e-14 {
        return None;
    }
    lu.solve(&DVector::from_column_slice(a)).map(|v| v.as_slice().to_vec())
}

/// Manufactured coefficient `q = (D f)(bar(D) f)^{-1}`, scaled down to sup-norm
/// `clip` where larger; zero where `bar(D) f` is singular.
pub fn manufactured_q(disc: &Discretization<'_>, f: &FieldSample, clip: f64) -> Result<FieldSample, BeltramiError> {
    let kind = disc.grid.spec.kind;
    let n = disc.grid.spec.n;
    let df = disc.dirac(DiracVariant::primary(kind), f)?;
    let dbf = disc.dirac(DiracVariant::conjugate(kind), f)?;
    let dim = 1 << n;
    let mut q = vec![0.0; f.values.len()];
    for c in 0..disc.grid.len() {
        if let Some(v) = right_quotient(n, df.cell(c), dbf.cell(c)) {
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            // shrink by a few ulps so the clipped norm never rounds above `clip`
            let s = if nv > clip { clip / nv * (1.0 - 4.0 * f64::EPSILON) } else { 1.0 };
            for k in 0..dim {
                q[c * dim + k] = s * v[k];
            }
        }
    }
    Ok(FieldSample::from_values(n, q))
}

/// Fueter-type monogenic seed `sum_i z_i c_i` with `z_i = x_i - x_0 e_i` and
/// right Clifford coefficients `c_i` (Euclidean, cylinder-transverse and Hopf use).
pub fn fueter_seed(grid: &DomainGrid, coeffs: &[Vec<f64>]) -> FieldSample {
    let n = grid.spec.n;
    let alg = algebra(n);
    FieldSample::from_fn(grid, !grid.faces.is_empty(), |x, o| {
        o.iter_mut().for_each(|v| *v = 0.0);
        for (i, c) in coeffs.iter().enumerate().take(n) {
            let mut z = vec![0.0; n + 1];
            z[0] = x[i + 1];
            z[i + 1] = -x[0];
            alg.para_left_acc(&z, c, o);
        }
    })
}

// ---------- problem files ----------

/// Parsed expression over coordinates `x0..xn`: constants, coordinates, sums,
/// products, quotients, negation and `exp`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    pub fn parse(src: &str, dims: usize) -> Result<Expr, BeltramiError> {
        let mut p = Parser { s: src.as_bytes(), i: 0, dims };
        let e = p.expr()?;
        p.ws();
        if p.i != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
    dims: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> BeltramiError {
        BeltramiError::Expression(format!("{msg} at offset {}", self.i))
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn expr(&mut self) -> Result<Expr, BeltramiError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.i += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.i += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, BeltramiError> {
        let mut lhs = self.factor()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.i += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                b'/' => {
                    self.i += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, BeltramiError> {
        match self.peek() {
            Some(b'-') => {
                self.i += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.i += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.i += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || b".eE".contains(&self.s[self.i]) || ((self.s[self.i] == b'-' || self.s[self.i] == b'+') && b"eE".contains(&self.s[self.i - 1]))) {
                    self.i += 1;
                }
                let t = std::str::from_utf8(&self.s[start..self.i]).expect("ascii");
                t.parse().map(Expr::Const).map_err(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_alphanumeric() {
                    self.i += 1;
                }
                let word = std::str::from_utf8(&self.s[start..self.i]).expect("ascii");
                if word == "exp" {
                    if self.peek() != Some(b'(') {
                        return Err(self.err("expected '(' after exp"));
                    }
                    self.i += 1;
                    let e = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.i += 1;
                    return Ok(Expr::Exp(Box::new(e)));
                }
                if let Some(idx) = word.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx < self.dims {
                        return Ok(Expr::Coord(idx));
                    }
                }
                Err(BeltramiError::Expression(format!("unknown identifier '{word}'")))
            }
            _ => Err(self.err("unexpected input")),
        }
    }
}

/// Blade index of a name such as `1`, `e1`, `e12`.
pub fn blade_index(name: &str, n: usize) -> Option<usize> {
    if name == "1" {
        return Some(0);
    }
    let digits = name.strip_prefix('e')?;
    let mut mask = 0usize;
    let mut last = 0;
    for ch in digits.chars() {
        let i = ch.to_digit(10)? as usize;
        if i == 0 || i > n || i <= last {
            return None;
        }
        mask |= 1 << (i - 1);
        last = i;
    }
    (mask != 0).then_some(mask)
}

/// JSON problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub manifold: String,
    pub n: usize,
    pub resolution: usize,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub bundle: Option<usize>,
    #[serde(default)]
    pub truncation: Option<usize>,
    /// Blade name to expression.
    pub q: BTreeMap<String, String>,
    pub phi: BTreeMap<String, String>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200
}

impl ProblemFile {
    pub fn spec(&self) -> Result<ManifoldSpec, BeltramiError> {
        let kind = Kind::parse(&self.manifold).ok_or_else(|| BeltramiError::Format(format!("unknown manifold '{}'", self.manifold)))?;
        let mut spec = ManifoldSpec::default_for(kind, self.n);
        if let Some(k) = self.k {
            spec.k = k;
        }
        if let Some(b) = self.bundle {
            spec.bundle = b;
        }
        if let Some(t) = self.truncation {
            spec.truncation = t;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<DomainGrid, BeltramiError> {
        Ok(default_grid(&self.spec()?, self.resolution)?)
    }

    fn sample(map: &BTreeMap<String, String>, grid: &DomainGrid) -> Result<FieldSample, BeltramiError> {
        let n = grid.spec.n;
        let d = grid.dim();
        let mut parts = Vec::new();
        for (name, src) in map {
            let b = blade_index(name, n).ok_or_else(|| BeltramiError::Format(format!("unknown blade '{name}'")))?;
            parts.push((b, Expr::parse(src, d)?));
        }
        Ok(FieldSample::from_fn(grid, !grid.faces.is_empty(), |x, o| {
            for (b, e) in &parts {
                o[*b] += e.eval(x);
            }
        }))
    }

    /// Build the problem on `grid`, certifying the seed.
    pub fn problem(&self, disc: &Discretization<'_>) -> Result<BeltramiProblem, BeltramiError> {
        let grid = disc.grid;
        let phi = Self::sample(&self.phi, grid)?;
        let bound = 10.0 * grid.h;
        let r = seed_residual(disc, &phi)?;
        let rel = r / disc.interior_norms(&phi).0.max(1e-300);
        if rel > bound {
            return Err(BeltramiError::SeedNotMonogenic { residual: rel, bound });
        }
        Ok(BeltramiProblem { q: Self::sample(&self.q, grid)?, phi, tol: self.tol, max_iter: self.max_iter })
    }
}
