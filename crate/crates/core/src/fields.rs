//! Sampled Clifford fields and smooth test-field families.

use crate::clifford::{algebra, CliffordError, Multivector};
use crate::geometry::{DomainGrid, Kind};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A `Cl_n`-valued function sampled on a grid: `2^n` coefficients per cell,
/// plus optional values on the boundary faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub n: usize,
    pub values: Vec<f64>,
    #[serde(default)]
    pub boundary: Option<Vec<f64>>,
}

impl FieldSample {
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn zeros(grid: &DomainGrid) -> Self {
        let n = grid.spec.n;
        Self { n, values: vec![0.0; grid.len() << n], boundary: None }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        Self { n, values, boundary: None }
    }

    /// Sample `f(x, out)` at cell centers (and at face centers when `with_boundary`).
    pub fn from_fn<F>(grid: &DomainGrid, with_boundary: bool, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let n = grid.spec.n;
        let dim = 1 << n;
        let mut values = vec![0.0; grid.len() * dim];
        for c in 0..grid.len() {
            f(grid.center(c), &mut values[c * dim..(c + 1) * dim]);
        }
        let boundary = with_boundary.then(|| {
            let mut b = vec![0.0; grid.faces.len() * dim];
            for (i, face) in grid.faces.iter().enumerate() {
                f(&face.center, &mut b[i * dim..(i + 1) * dim]);
            }
            b
        });
        Self { n, values, boundary }
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.values[c * d..(c + 1) * d]
    }

    pub fn multivector(&self, c: usize) -> Multivector {
        Multivector::new(self.n, self.cell(c).to_vec()).expect("cell slice has 2^n entries")
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_grid(&self, grid: &DomainGrid) -> Result<(), CliffordError> {
        if self.n != grid.spec.n {
            return Err(CliffordError::DimensionMismatch { left: self.n, right: grid.spec.n });
        }
        if self.values.len() != grid.len() << self.n {
            return Err(CliffordError::CoefficientCount {
                expected: grid.len() << self.n,
                got: self.values.len(),
            });
        }
        Ok(())
    }

    /// `self + alpha * other` (values only).
    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect(),
            boundary: None,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|v| v * s).collect(),
            boundary: self.boundary.as_ref().map(|b| b.iter().map(|v| v * s).collect()),
        }
    }

    /// Pointwise left product `q(x) self(x)`.
    pub fn left_mul(&self, q: &Self) -> Self {
        let d = self.dim();
        let alg = algebra(self.n);
        let mut out = vec![0.0; self.values.len()];
        for c in 0..self.len() {
            alg.mul_acc(q.cell(c), self.cell(c), &mut out[c * d..(c + 1) * d]);
        }
        Self::from_values(self.n, out)
    }

    /// Largest coefficient-norm over cells.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|c| self.cell(c).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Smooth compactly supported bump `(1 - |x - c|^2 / r^2)^6 (a + sum_i x_i b_i)`
/// with Clifford coefficients `a`, `b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub constant: Vec<f64>,
    pub linear: Vec<Vec<f64>>,
}

pub const BUMP_POWER: i32 = 6;

impl Bump {
    pub fn eval_acc(&self, x: &[f64], out: &mut [f64]) {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        let s = 1.0 - r2 / (self.radius * self.radius);
        if s <= 0.0 {
            return;
        }
        let w = s.powi(BUMP_POWER);
        for (b, o) in out.iter_mut().enumerate() {
            let mut v = self.constant[b];
            for (i, l) in self.linear.iter().enumerate() {
                v += (x[i] - self.center[i]) / self.radius * l[b];
            }
            *o += w * v;
        }
    }

    /// Random bump with standard normal coefficients.
    pub fn random<R: Rng>(rng: &mut R, n: usize, center: Vec<f64>, radius: f64) -> Self {
        let dim = 1 << n;
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let constant = (0..dim).map(|_| normal()).collect();
        let linear = (0..=n).map(|_| (0..dim).map(|_| normal()).collect()).collect();
        Self { center, radius, constant, linear }
    }
}

/// Sum of bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub n: usize,
    pub bumps: Vec<Bump>,
}

impl BumpField {
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for b in &self.bumps {
            b.eval_acc(x, out);
        }
    }

    /// Sample on a grid. On a cylinder the bumps are replaced by their
    /// (anti)periodic extension over neighbouring lattice cells.
    pub fn sample(&self, grid: &DomainGrid) -> FieldSample {
        let spec = grid.spec;
        if spec.kind != Kind::Cylinder {
            return FieldSample::from_fn(grid, false, |x, o| self.eval(x, o));
        }
        let images: Vec<Vec<i64>> = (0..3usize.pow(spec.k as u32))
            .map(|t| (0..spec.k).map(|a| (t / 3usize.pow(a as u32) % 3) as i64 - 1).collect())
            .collect();
        FieldSample::from_fn(grid, false, |x, o| {
            o.iter_mut().for_each(|v| *v = 0.0);
            let mut y = x.to_vec();
            let mut t = vec![0.0; o.len()];
            for m in &images {
                for (a, ma) in m.iter().enumerate() {
                    y[a] = x[a] + *ma as f64;
                }
                self.eval(&y, &mut t);
                let s = spec.lattice_sign(m);
                o.iter_mut().zip(&t).for_each(|(a, b)| *a += s * b);
            }
        })
    }
}

/// Region where compact bumps are placed, per geometry.
fn support_region(grid: &DomainGrid) -> (Vec<f64>, Vec<f64>) {
    let d = grid.dim();
    match &grid.domain {
        crate::geometry::ReferenceDomain::Box { lo, hi } => (lo.clone(), hi.clone()),
        crate::geometry::ReferenceDomain::Annulus { outer, .. } => (vec![-outer; d], vec![*outer; d]),
        _ => (vec![-1.0; d], vec![1.0; d]),
    }
}

/// Random compactly supported field: `count` bumps of radius `radius` placed so
/// that their support stays at least `margin` away from the domain boundary (on
/// a cylinder the lattice directions are periodic and unconstrained).
pub fn random_compact_field<R: Rng>(grid: &DomainGrid, rng: &mut R, count: usize, radius: f64, margin: f64) -> BumpField {
    let n = grid.spec.n;
    let d = grid.dim();
    let (lo, hi) = support_region(grid);
    let mut bumps = Vec::with_capacity(count);
    while bumps.len() < count {
        let center: Vec<f64> = (0..d)
            .map(|a| {
                let periodic = grid.spec.kind == Kind::Cylinder && a < grid.spec.k;
                let pad = if periodic { 0.0 } else { radius + margin };
                rng.random_range(lo[a] + pad..=hi[a] - pad)
            })
            .collect();
        if let crate::geometry::ReferenceDomain::Annulus { inner, outer } = grid.domain {
            let r = center.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r - radius - margin < inner || r + radius + margin > outer {
                continue;
            }
        }
        bumps.push(Bump::random(rng, n, center, radius));
    }
    BumpField { n, bumps }
}

/// Smooth non-compact field: `sum_k c_k prod_i cos(w_{k,i} x_i + p_{k,i})` with
/// random Clifford coefficients and frequencies of order one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveField {
    pub n: usize,
    pub modes: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl WaveField {
    pub fn random<R: Rng>(rng: &mut R, n: usize, modes: usize) -> Self {
        let dim = 1 << n;
        let modes = (0..modes)
            .map(|_| {
                let w = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let p = (0..=n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
                let c = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                (w, p, c)
            })
            .collect();
        Self { n, modes }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (w, p, c) in &self.modes {
            let s: f64 = x.iter().zip(w).zip(p).map(|((x, w), p)| (w * x + p).cos()).product();
            for (o, ci) in out.iter_mut().zip(c) {
                *o += s * ci;
            }
        }
    }

    /// Field sampled with boundary values, optionally symmetrized under `x -> -x`
    /// with the given parity (used for rp sections).
    pub fn sample(&self, grid: &DomainGrid, parity: Option<f64>) -> FieldSample {
        let dim = 1 << self.n;
        FieldSample::from_fn(grid, !grid.faces.is_empty(), |x, o| {
            self.eval(x, o);
            if let Some(p) = parity {
                let mx: Vec<f64> = x.iter().map(|v| -v).collect();
                let mut t = vec![0.0; dim];
                self.eval(&mx, &mut t);
                for (a, b) in o.iter_mut().zip(&t) {
                    *a = 0.5 * (*a + p * b);
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_grid, ManifoldSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn compact_fields_vanish_near_the_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [ManifoldSpec::euclid(2), ManifoldSpec::hopf(2), ManifoldSpec::hyperbolic(2)] {
            let grid = default_grid(&spec, 8).unwrap();
            let f = random_compact_field(&grid, &mut rng, 2, 0.25, 0.1).sample(&grid);
            for c in 0..grid.len() {
                if grid.boundary_distance(c) < 0.1 {
                    assert!(f.cell(c).iter().all(|v| *v == 0.0));
                }
            }
            assert!(f.sup_norm() > 0.0);
        }
    }

    #[test]
    fn parity_symmetrization() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = WaveField::random(&mut rng, 2, 3);
        let grid = default_grid(&ManifoldSpec::sphere(2), 8).unwrap();
        let f = w.sample(&grid, Some(-1.0));
        // antipodal cells of the full lat-long grid: (i, j) <-> (N-1-i, j + N)
        let l = grid.latlong().unwrap();
        let (i, j) = (2, 3);
        let a = i * l.n_phi + j;
        let b = (l.n_theta - 1 - i) * l.n_phi + (j + l.n_phi / 2);
        for k in 0..4 {
            assert!((f.cell(a)[k] + f.cell(b)[k]).abs() < 1e-12);
        }
    }
}
