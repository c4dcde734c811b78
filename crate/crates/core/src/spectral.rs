//! Harmonic subspaces on S^2 and RP^2 and Galerkin spectra of the projective
//! Dirac operator and Cauchy transform.

use crate::fields::FieldSample;
use crate::geometry::{default_grid, DomainGrid, GeometryError, Kind, ManifoldSpec};
use crate::operators::{Discretization, DiracVariant, OperatorError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("spectral checks are implemented for n = 2, got n = {0}")]
    Dimension(usize),
    #[error("degree {m} is under-resolved: {cells:.1} cells per oscillation (need 10)")]
    DegreeTooHigh { m: usize, cells: f64 },
    #[error("Gram matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
}

/// Real homogeneous polynomial on `R^d`, monomial exponents to coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub d: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn monomial(exps: Vec<u32>) -> Self {
        let d = exps.len();
        Self { d, terms: BTreeMap::from([(exps, 1.0)]) }
    }

    fn add_term(&mut self, e: Vec<u32>, c: f64) {
        *self.terms.entry(e).or_insert(0.0) += c;
    }

    pub fn laplacian(&self) -> Self {
        let mut out = Self { d: self.d, terms: BTreeMap::new() };
        for (e, c) in &self.terms {
            for a in 0..self.d {
                if e[a] >= 2 {
                    let mut f = e.clone();
                    f[a] -= 2;
                    out.add_term(f, c * (e[a] * (e[a] - 1)) as f64);
                }
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// Multiply by `|x|^2`.
    pub fn mul_r2(&self) -> Self {
        let mut out = Self { d: self.d, terms: BTreeMap::new() };
        for (e, c) in &self.terms {
            for a in 0..self.d {
                let mut f = e.clone();
                f[a] += 2;
                out.add_term(f, *c);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { d: self.d, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(k, v)| v.powi(*k as i32)).product::<f64>())
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.abs() < 1e-13)
    }
}

/// Harmonic projection `H[p] = sum_j a_j |x|^{2j} Laplacian^j p` of a
/// homogeneous polynomial of degree `m`, with
/// `a_0 = 1`, `a_{j+1} = -a_j / (2 (j + 1) (d + 2m - 2j - 4))`.
pub fn harmonic_projection(p: &Poly, m: usize) -> Poly {
    let d = p.d as f64;
    let mut out = Poly { d: p.d, terms: BTreeMap::new() };
    let mut lap = p.clone();
    let mut a = 1.0;
    let mut j = 0usize;
    loop {
        let mut term = lap.clone();
        for _ in 0..j {
            term = term.mul_r2();
        }
        out = out.add(&term.scale(a));
        lap = lap.laplacian();
        if lap.is_zero() {
            break;
        }
        let den = 2.0 * (j as f64 + 1.0) * (d + 2.0 * m as f64 - 2.0 * j as f64 - 4.0);
        a = -a / den;
        j += 1;
    }
    out
}

/// All exponent vectors of total degree `m` in `d` variables.
fn monomials(d: usize, m: usize) -> Vec<Vec<u32>> {
    if d == 1 {
        return vec![vec![m as u32]];
    }
    (0..=m)
        .rev()
        .flat_map(|k| {
            monomials(d - 1, m - k).into_iter().map(move |mut rest| {
                rest.insert(0, k as u32);
                rest
            })
        })
        .collect()
}

/// Harmonic polynomials of degree `m` spanning `H_m` (possibly over-complete).
pub fn harmonic_polynomials(d: usize, m: usize) -> Vec<Poly> {
    monomials(d, m)
        .into_iter()
        .map(|e| harmonic_projection(&Poly::monomial(e), m))
        .filter(|p| !p.is_zero())
        .collect()
}

/// Orthonormal basis of `H_m (x) Cl_n` restricted to a spherical grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub degree: usize,
    /// Even degrees only (rp bundle 1 sections).
    pub even: bool,
    pub labels: Vec<String>,
    pub basis: Vec<FieldSample>,
}

fn check_resolution(grid: &DomainGrid, m: usize) -> Result<(), SpectralError> {
    if m == 0 {
        return Ok(());
    }
    let cells = 2.0 * std::f64::consts::PI / m as f64 / grid.h;
    if cells < 10.0 {
        return Err(SpectralError::DegreeTooHigh { m, cells });
    }
    Ok(())
}

/// Gram-Schmidt (two passes) under the scalar inner product; near-dependent
/// vectors are dropped.
fn orthonormalize(disc: &Discretization<'_>, fields: Vec<(String, FieldSample)>, against: &[FieldSample]) -> Vec<(String, FieldSample)> {
    let mut out: Vec<(String, FieldSample)> = Vec::new();
    for (label, f) in fields {
        let n0 = disc.norm(&f);
        if n0 == 0.0 {
            continue;
        }
        let mut v = f;
        for _ in 0..2 {
            for b in against.iter().chain(out.iter().map(|(_, b)| b)) {
                let c = disc.dot(b, &v);
                v = v.axpy(-c, b);
            }
        }
        let nv = disc.norm(&v);
        if nv > 1e-6 * n0 {
            out.push((label, v.scale(1.0 / nv)));
        }
    }
    out
}

/// Basis of `H_m (x) Cl_2` on the grid, orthonormal and orthogonal to `lower`.
pub fn build_subspace_basis_on(disc: &Discretization<'_>, m: usize, lower: &[FieldSample]) -> Result<SubspaceBasis, SpectralError> {
    let grid = disc.grid;
    let n = grid.spec.n;
    if n != 2 {
        return Err(SpectralError::Dimension(n));
    }
    check_resolution(grid, m)?;
    let dim = 1 << n;
    let mut raw = Vec::new();
    for (k, p) in harmonic_polynomials(n + 1, m).iter().enumerate() {
        for b in 0..dim {
            let f = FieldSample::from_fn(grid, false, |x, o| o[b] = p.eval(x));
            raw.push((format!("H{m}[{k}]e{b}"), f));
        }
    }
    let ortho = orthonormalize(disc, raw, lower);
    let (labels, basis) = ortho.into_iter().unzip();
    Ok(SubspaceBasis { degree: m, even: m % 2 == 0, labels, basis })
}

/// Basis of degree-`m` harmonics on the default full-sphere grid of the given resolution.
pub fn build_subspace_basis(n: usize, m: usize, resolution: usize) -> Result<(DomainGrid, SubspaceBasis), SpectralError> {
    if n != 2 {
        return Err(SpectralError::Dimension(n));
    }
    if m > 4 {
        return Err(SpectralError::DegreeTooHigh { m, cells: 0.0 });
    }
    let grid = default_grid(&ManifoldSpec::sphere(n), resolution)?;
    let basis = {
        let disc = Discretization::new(&grid);
        build_subspace_basis_on(&disc, m, &[])?
    };
    Ok((grid, basis))
}

/// Scalar Gram matrix `<b_i, b_j>_0`.
pub fn gram(disc: &Discretization<'_>, basis: &[FieldSample]) -> DMatrix<f64> {
    let k = basis.len();
    DMatrix::from_fn(k, k, |i, j| disc.dot(&basis[i], &basis[j]))
}

/// Galerkin matrix `A_ij = <b_i, op(b_j)>_0` for an orthonormal basis.
pub fn galerkin<F>(disc: &Discretization<'_>, basis: &[FieldSample], op: F) -> Result<DMatrix<f64>, SpectralError>
where
    F: Fn(&FieldSample) -> Result<FieldSample, OperatorError>,
{
    let images: Vec<FieldSample> = basis.iter().map(&op).collect::<Result<_, _>>()?;
    let k = basis.len();
    Ok(DMatrix::from_fn(k, k, |i, j| disc.dot(&basis[i], &images[j])))
}

/// Eigenvalue table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub computed_re: f64,
    pub computed_im: f64,
    pub expected: Option<f64>,
    pub relative_error: Option<f64>,
}

/// Result of a Galerkin spectrum check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub name: String,
    pub resolution: usize,
    pub basis_size: usize,
    pub gram_condition: f64,
    pub rows: Vec<EigenRow>,
    /// Largest relative mismatch to the nearest expected value.
    pub max_mismatch: f64,
    /// Largest singular value of the Galerkin matrix.
    pub galerkin_norm: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn condition(g: &DMatrix<f64>) -> f64 {
    let sv = g.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn eigen_table(a: &DMatrix<f64>, expected: &[f64]) -> (Vec<EigenRow>, f64) {
    let ev = a.complex_eigenvalues();
    let mut rows: Vec<EigenRow> = ev
        .iter()
        .map(|z| {
            let best = expected
                .iter()
                .map(|e| (*e, ((z.re - e).powi(2) + z.im.powi(2)).sqrt() / e.abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            EigenRow {
                computed_re: z.re,
                computed_im: z.im,
                expected: best.map(|b| b.0),
                relative_error: best.map(|b| b.1),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.computed_re.total_cmp(&b.computed_re).then(a.computed_im.total_cmp(&b.computed_im)));
    let worst = rows.iter().filter_map(|r| r.relative_error).fold(0.0, f64::max);
    (rows, worst)
}

/// Even-degree harmonic basis `H'_0 + ... + H'_{2 m_max}` on an rp grid.
pub fn rp_even_basis(disc: &Discretization<'_>, m_max: usize) -> Result<Vec<FieldSample>, SpectralError> {
    let mut all: Vec<FieldSample> = Vec::new();
    for m in 0..=m_max {
        let b = build_subspace_basis_on(disc, 2 * m, &all)?;
        all.extend(b.basis);
    }
    let c = condition(&gram(disc, &all));
    if !c.is_finite() || c > 1e8 {
        return Err(SpectralError::IllConditioned(c));
    }
    Ok(all)
}

fn rp_check<F>(resolution: usize, m_max: usize, name: &str, expected: Vec<f64>, op: F) -> Result<SpectrumReport, SpectralError>
where
    F: Fn(&Discretization<'_>, &FieldSample) -> Result<FieldSample, OperatorError>,
{
    let spec = ManifoldSpec::rp(2, 1);
    let grid = default_grid(&spec, resolution)?;
    let disc = Discretization::new(&grid);
    let basis = rp_even_basis(&disc, m_max)?;
    let gram_condition = condition(&gram(&disc, &basis));
    let a = galerkin(&disc, &basis, |f| op(&disc, f))?;
    let galerkin_norm = a.clone().singular_values().iter().cloned().fold(0.0, f64::max);
    let (rows, worst) = eigen_table(&a, &expected);
    Ok(SpectrumReport {
        name: name.into(),
        resolution,
        basis_size: basis.len(),
        gram_condition,
        rows,
        max_mismatch: worst,
        galerkin_norm,
        tolerance: 0.05,
        pass: worst <= 0.05,
    })
}

/// Expected Dirac eigenvalues `+-(2m + n)` for `m <= m_max`.
pub fn expected_dirac(n: usize, m_max: usize) -> Vec<f64> {
    (0..=m_max).flat_map(|m| [(2 * m + n) as f64, -((2 * m + n) as f64)]).collect()
}

/// Expected Cauchy-transform eigenvalues `+-2 / (2m + n)`.
pub fn expected_cauchy(n: usize, m_max: usize) -> Vec<f64> {
    expected_dirac(n, m_max).into_iter().map(|v| 2.0 / v).collect()
}

/// Galerkin spectrum of the projective Dirac operator on even harmonics.
pub fn spectrum_check_dirac_rp(n: usize, m_max: usize, resolution: usize) -> Result<SpectrumReport, SpectralError> {
    if n != 2 {
        return Err(SpectralError::Dimension(n));
    }
    rp_check(resolution, m_max, "rp_dirac", expected_dirac(n, m_max), |d, f| d.dirac(DiracVariant::Ds, f))
}

/// Galerkin spectrum of the projective Cauchy transform on even harmonics.
pub fn spectrum_check_cauchy_rp(n: usize, m_max: usize, resolution: usize) -> Result<SpectrumReport, SpectralError> {
    if n != 2 {
        return Err(SpectralError::Dimension(n));
    }
    rp_check(resolution, m_max, "rp_cauchy", expected_cauchy(n, m_max), |d, f| d.cauchy(f))
}

/// For each expected Dirac eigenvalue `lambda`, the product of the computed
/// Dirac and Cauchy eigenvalues nearest to `lambda` and `2 / lambda`.
pub fn product_consistency(dirac: &SpectrumReport, cauchy: &SpectrumReport, n: usize, m_max: usize) -> Vec<f64> {
    let nearest = |rows: &[EigenRow], target: f64| -> f64 {
        rows.iter()
            .map(|r| r.computed_re)
            .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
            .unwrap_or(0.0)
    };
    expected_dirac(n, m_max)
        .into_iter()
        .map(|l| nearest(&dirac.rows, l) * nearest(&cauchy.rows, 2.0 / l))
        .collect()
}

/// Parity diagnostics on the full sphere: for each even-degree basis element
/// `b`, the fraction of `|D_s b|^2` carried by even functions
/// (`(g(x) + g(-x)) / 2`). Zero means `D_s` maps even harmonics entirely to odd ones.
pub fn dirac_even_fraction(resolution: usize, m_max: usize) -> Result<Vec<f64>, SpectralError> {
    let grid = default_grid(&ManifoldSpec::sphere(2), resolution)?;
    let disc = Discretization::new(&grid);
    let l = grid.latlong().expect("sphere grid");
    let mut all: Vec<FieldSample> = Vec::new();
    for m in 0..=m_max {
        let b = build_subspace_basis_on(&disc, 2 * m, &all)?;
        all.extend(b.basis);
    }
    let dim = 4;
    let antipode = |c: usize| {
        let (i, j) = (c / l.n_phi, c % l.n_phi);
        (l.n_theta - 1 - i) * l.n_phi + (j + l.n_phi / 2) % l.n_phi
    };
    all.iter()
        .map(|b| {
            let g = disc.dirac(DiracVariant::Ds, b)?;
            let mut even = g.clone();
            for c in 0..grid.len() {
                let a = antipode(c);
                for k in 0..dim {
                    even.values[c * dim + k] = 0.5 * (g.values[c * dim + k] + g.values[a * dim + k]);
                }
            }
            let tot = disc.dot(&g, &g);
            Ok(if tot > 0.0 { disc.dot(&even, &even) / tot } else { 0.0 })
        })
        .collect()
}

/// Galerkin eigenvalues of `D_s` on `H_0 + ... + H_{m_max}` over the full sphere
/// (computed values only; no expected column).
pub fn sphere_dirac_spectrum(resolution: usize, m_max: usize) -> Result<SpectrumReport, SpectralError> {
    let grid = default_grid(&ManifoldSpec::sphere(2), resolution)?;
    let disc = Discretization::new(&grid);
    let mut all: Vec<FieldSample> = Vec::new();
    for m in 0..=m_max {
        let b = build_subspace_basis_on(&disc, m, &all)?;
        all.extend(b.basis);
    }
    let gram_condition = condition(&gram(&disc, &all));
    let a = galerkin(&disc, &all, |f| disc.dirac(DiracVariant::Ds, f))?;
    let galerkin_norm = a.clone().singular_values().iter().cloned().fold(0.0, f64::max);
    let (rows, _) = eigen_table(&a, &[]);
    Ok(SpectrumReport {
        name: "sphere_dirac".into(),
        resolution,
        basis_size: all.len(),
        gram_condition,
        rows,
        max_mismatch: 0.0,
        galerkin_norm,
        tolerance: 0.0,
        pass: true,
    })
}

/// Even part of a field on an rp bundle-1 grid: the section obtained from
/// `g(x)` by identifying `x` with `-x`, i.e. `(g(x) + g(-x)) / 2`.
pub fn rp_section_of<G>(grid: &DomainGrid, g: G) -> FieldSample
where
    G: Fn(&[f64], &mut [f64]),
{
    let dim = 1 << grid.spec.n;
    FieldSample::from_fn(grid, false, |x, o| {
        g(x, o);
        let mx: Vec<f64> = x.iter().map(|v| -v).collect();
        let mut t = vec![0.0; dim];
        g(&mx, &mut t);
        let p = if grid.spec.kind == Kind::Rp { grid.spec.rp_parity() } else { 1.0 };
        for (a, b) in o.iter_mut().zip(&t) {
            *a = 0.5 * (*a + p * b);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_laplacian(p: &Poly, x: &[f64]) -> f64 {
        let h = 1e-3;
        let mut s = 0.0;
        for a in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += h;
            xm[a] -= h;
            s += (p.eval(&xp) - 2.0 * p.eval(x) + p.eval(&xm)) / (h * h);
        }
        s
    }

    #[test]
    fn harmonic_projection_is_harmonic() {
        for m in 0..=4 {
            for p in harmonic_polynomials(3, m) {
                assert!(p.laplacian().is_zero(), "degree {m}");
                // independent check by finite differences
                assert!(numeric_laplacian(&p, &[0.3, -0.7, 0.5]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn harmonic_space_dimensions() {
        let grid = default_grid(&ManifoldSpec::sphere(2), 24).unwrap();
        let disc = Discretization::new(&grid);
        let b0 = build_subspace_basis_on(&disc, 0, &[]).unwrap();
        assert_eq!(b0.basis.len(), 4);
        let b1 = build_subspace_basis_on(&disc, 1, &b0.basis).unwrap();
        assert_eq!(b1.basis.len(), 12);
        let mut lower = b0.basis.clone();
        lower.extend(b1.basis.clone());
        let b2 = build_subspace_basis_on(&disc, 2, &lower).unwrap();
        assert_eq!(b2.basis.len(), 20);
        let mut all = lower;
        all.extend(b2.basis);
        let g = gram(&disc, &all);
        let err = (g - DMatrix::identity(all.len(), all.len())).abs().max();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn coarse_grid_rejects_high_degree() {
        let grid = default_grid(&ManifoldSpec::sphere(2), 8).unwrap();
        let disc = Discretization::new(&grid);
        assert!(matches!(build_subspace_basis_on(&disc, 4, &[]), Err(SpectralError::DegreeTooHigh { .. })));
        assert!(matches!(build_subspace_basis(3, 0, 8), Err(SpectralError::Dimension(3))));
    }

    #[test]
    fn odd_harmonics_vanish_as_rp_sections() {
        let grid = default_grid(&ManifoldSpec::rp(2, 1), 16).unwrap();
        for p in harmonic_polynomials(3, 3) {
            let f = rp_section_of(&grid, |x, o| o[0] = p.eval(x));
            let input = FieldSample::from_fn(&grid, false, |x, o| o[0] = p.eval(x));
            assert!(f.sup_norm() <= 1e-8 * input.sup_norm().max(1e-300));
        }
    }

    #[test]
    fn expected_values() {
        assert_eq!(expected_dirac(2, 1), vec![2.0, -2.0, 4.0, -4.0]);
        assert_eq!(expected_cauchy(2, 1), vec![1.0, -1.0, 0.5, -0.5]);
    }
}
