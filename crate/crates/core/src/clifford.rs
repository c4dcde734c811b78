//! Real Clifford algebra `Cl_n` with generators `e_1..e_n`, `e_i^2 = -1`.
//!
//! Blades are indexed by subset bitmask: bit `i-1` set means `e_i` is a factor,
//! mask 0 is the scalar `e_0 = 1`. Coefficient arrays therefore have length `2^n`.
//! Paravectors `x_0 + x_1 e_1 + ... + x_n e_n` stand for points of `R^{n+1}`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::OnceLock;
use thiserror::Error;

/// Largest supported algebra dimension.
pub const MAX_N: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("algebra dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("unsupported algebra dimension n = {0} (allowed 1..={MAX_N})")]
    UnsupportedDimension(usize),
    #[error("paravector has zero norm and no inverse")]
    SingularParavector,
}

/// Sign of `e_a e_b` relative to `e_{a xor b}`.
///
/// Counts the transpositions needed to sort the concatenated generator list,
/// then one factor of -1 per generator squared away.
pub fn blade_sign(a: usize, b: usize) -> f64 {
    let mut swaps = 0u32;
    let mut t = a >> 1;
    while t != 0 {
        swaps += (t & b).count_ones();
        t >>= 1;
    }
    swaps += (a & b).count_ones();
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Grade of a blade mask.
#[inline]
pub fn grade(mask: usize) -> u32 {
    mask.count_ones()
}

/// Precomputed multiplication table for one dimension.
#[derive(Debug)]
pub struct Algebra {
    n: usize,
    dim: usize,
    sign: Vec<f64>,
    rev: Vec<f64>,
    conj: Vec<f64>,
    bar: Vec<f64>,
    hat: Vec<f64>,
}

static ALGEBRAS: [OnceLock<Algebra>; MAX_N + 1] = [const { OnceLock::new() }; MAX_N + 1];

/// Shared table for `Cl_n`. Panics outside `1..=MAX_N`; use [`check_dim`] first
/// when the dimension comes from user input.
pub fn algebra(n: usize) -> &'static Algebra {
    assert!((1..=MAX_N).contains(&n), "Cl_n with n = {n} is not supported");
    ALGEBRAS[n].get_or_init(|| Algebra::build(n))
}

pub fn check_dim(n: usize) -> Result<(), CliffordError> {
    if (1..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(CliffordError::UnsupportedDimension(n))
    }
}

impl Algebra {
    fn build(n: usize) -> Self {
        let dim = 1usize << n;
        let mut sign = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                sign[a * dim + b] = blade_sign(a, b);
            }
        }
        let pm = |odd: bool| if odd { -1.0 } else { 1.0 };
        let nbit = 1usize << (n - 1);
        let mut rev = vec![0.0; dim];
        let mut conj = vec![0.0; dim];
        let mut bar = vec![0.0; dim];
        let mut hat = vec![0.0; dim];
        for a in 0..dim {
            let r = grade(a) as usize;
            rev[a] = pm((r * r.saturating_sub(1) / 2) % 2 == 1);
            conj[a] = pm((r * (r + 1) / 2) % 2 == 1);
            bar[a] = rev[a] * conj[a];
            hat[a] = pm(a & nbit != 0);
        }
        Self { n, dim, sign, rev, conj, bar, hat }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn sign(&self, a: usize, b: usize) -> f64 {
        self.sign[a * self.dim + b]
    }

    /// Per-blade sign vector of an involution.
    pub fn involution_signs(&self, kind: Involution) -> &[f64] {
        match kind {
            Involution::Reversion => &self.rev,
            Involution::Conjugation => &self.conj,
            Involution::Bar => &self.bar,
            Involution::Hat => &self.hat,
        }
    }

    /// `out += a * b` on raw coefficient slices.
    #[inline]
    pub fn mul_acc(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, &ai) in a.iter().enumerate().take(d) {
            if ai == 0.0 {
                continue;
            }
            let row = &self.sign[i * d..(i + 1) * d];
            for (j, &bj) in b.iter().enumerate().take(d) {
                out[i ^ j] += row[j] * ai * bj;
            }
        }
    }

    /// `out += p * b` where `p` holds paravector components `p_0..p_n`.
    #[inline]
    pub fn para_left_acc(&self, p: &[f64], b: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, &pi) in p.iter().enumerate().take(self.n + 1) {
            if pi == 0.0 {
                continue;
            }
            let bi = para_blade(i);
            let row = &self.sign[bi * d..(bi + 1) * d];
            for (j, &bj) in b.iter().enumerate().take(d) {
                out[bi ^ j] += row[j] * pi * bj;
            }
        }
    }

    /// `out += b * p` where `p` holds paravector components `p_0..p_n`.
    #[inline]
    pub fn para_right_acc(&self, b: &[f64], p: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, &pi) in p.iter().enumerate().take(self.n + 1) {
            if pi == 0.0 {
                continue;
            }
            let bi = para_blade(i);
            for (j, &bj) in b.iter().enumerate().take(d) {
                out[j ^ bi] += self.sign[j * d + bi] * bj * pi;
            }
        }
    }

    /// `out += s * x` with `x` transformed by an involution.
    #[inline]
    pub fn involution_acc(&self, kind: Involution, s: f64, x: &[f64], out: &mut [f64]) {
        let signs = self.involution_signs(kind);
        for ((o, &xi), &si) in out.iter_mut().zip(x).zip(signs) {
            *o += s * si * xi;
        }
    }

    /// Scalar part of `conj(a) * b`, the real inner product of coefficient vectors.
    #[inline]
    pub fn scalar_product(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// `out += Q'(a)` for the split `a = P + Q e_n`, `Q' = -e_n Q e_n`.
    #[inline]
    pub fn qprime_acc(&self, s: f64, a: &[f64], out: &mut [f64]) {
        let nbit = 1usize << (self.n - 1);
        for (mask, &v) in a.iter().enumerate() {
            if mask & nbit != 0 {
                let low = mask ^ nbit;
                let sg = if grade(low) % 2 == 0 { 1.0 } else { -1.0 };
                out[low] += s * sg * v;
            }
        }
    }
}

/// Blade mask of paravector component `i` (0 is the scalar).
#[inline]
pub fn para_blade(i: usize) -> usize {
    if i == 0 {
        0
    } else {
        1 << (i - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Involution {
    Reversion,
    Conjugation,
    Bar,
    Hat,
}

impl Involution {
    pub const ALL: [Involution; 4] = [
        Involution::Reversion,
        Involution::Conjugation,
        Involution::Bar,
        Involution::Hat,
    ];
}

/// Element of `Cl_n` as `2^n` blade coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multivector {
    n: usize,
    coeffs: Vec<f64>,
}

impl Multivector {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self, CliffordError> {
        check_dim(n)?;
        if coeffs.len() != 1 << n {
            return Err(CliffordError::CoefficientCount {
                expected: 1 << n,
                got: coeffs.len(),
            });
        }
        Ok(Self { n, coeffs })
    }

    pub fn zero(n: usize) -> Self {
        check_dim(n).expect("valid dimension");
        Self {
            n,
            coeffs: vec![0.0; 1 << n],
        }
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        Self::blade(n, 0, s)
    }

    pub fn blade(n: usize, mask: usize, value: f64) -> Self {
        let mut m = Self::zero(n);
        m.coeffs[mask] = value;
        m
    }

    /// Basis paravector direction `e_i`, with `e_0` the identity.
    pub fn e(n: usize, i: usize) -> Self {
        assert!(i <= n, "e_{i} does not exist in Cl_{n}");
        Self::blade(n, para_blade(i), 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn get(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    fn same_dim(&self, other: &Self) -> Result<(), CliffordError> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(CliffordError::DimensionMismatch {
                left: self.n,
                right: other.n,
            })
        }
    }

    /// Geometric product.
    pub fn gp(&self, other: &Self) -> Result<Self, CliffordError> {
        self.same_dim(other)?;
        let mut out = Self::zero(self.n);
        algebra(self.n).mul_acc(&self.coeffs, &other.coeffs, &mut out.coeffs);
        Ok(out)
    }

    pub fn involution(&self, kind: Involution) -> Self {
        let signs = algebra(self.n).involution_signs(kind);
        Self {
            n: self.n,
            coeffs: self.coeffs.iter().zip(signs).map(|(c, s)| c * s).collect(),
        }
    }

    pub fn norm2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn scalar_part(&self) -> f64 {
        self.coeffs[0]
    }

    /// Largest coefficient difference; `f64::INFINITY` on dimension mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.n != other.n {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Whether only grade 0 and grade 1 blades are populated (within `tol`).
    pub fn is_paravector(&self, tol: f64) -> bool {
        self.coeffs
            .iter()
            .enumerate()
            .all(|(m, c)| grade(m) <= 1 || c.abs() <= tol)
    }
}

impl Add for &Multivector {
    type Output = Multivector;
    fn add(self, rhs: Self) -> Multivector {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        Multivector {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Multivector {
    type Output = Multivector;
    fn sub(self, rhs: Self) -> Multivector {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        Multivector {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&Multivector> for Multivector {
    fn add_assign(&mut self, rhs: &Multivector) {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl Neg for &Multivector {
    type Output = Multivector;
    fn neg(self) -> Multivector {
        self * -1.0
    }
}

impl Mul<f64> for &Multivector {
    type Output = Multivector;
    fn mul(self, s: f64) -> Multivector {
        Multivector {
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

impl Mul for &Multivector {
    type Output = Multivector;
    fn mul(self, rhs: Self) -> Multivector {
        self.gp(rhs).expect("dimension mismatch")
    }
}

/// Point of `R^{n+1}` written as `x_0 + x_1 e_1 + ... + x_n e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paravector(pub Vec<f64>);

impl Paravector {
    pub fn new(components: Vec<f64>) -> Result<Self, CliffordError> {
        check_dim(components.len().saturating_sub(1))?;
        Ok(Self(components))
    }

    pub fn n(&self) -> usize {
        self.0.len() - 1
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn embed(&self) -> Multivector {
        let n = self.n();
        let mut m = Multivector::zero(n);
        for (i, &x) in self.0.iter().enumerate() {
            m.coeffs[para_blade(i)] = x;
        }
        m
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    /// `x_0 - x_1 e_1 - ... - x_n e_n`.
    pub fn bar(&self) -> Self {
        let mut c = self.0.clone();
        for x in c.iter_mut().skip(1) {
            *x = -*x;
        }
        Self(c)
    }

    /// Reflection in the last coordinate.
    pub fn hat(&self) -> Self {
        let mut c = self.0.clone();
        let last = c.len() - 1;
        c[last] = -c[last];
        Self(c)
    }

    /// Two-sided inverse `bar(x) / |x|^2`.
    pub fn invert(&self) -> Result<Multivector, CliffordError> {
        let r2 = self.norm2();
        if r2 == 0.0 || !r2.is_finite() {
            return Err(CliffordError::SingularParavector);
        }
        Ok(&self.bar().embed() * (1.0 / r2))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|a| a * s).collect())
    }
}

/// `a = P + Q e_n` with `P, Q` free of `e_n`, plus `Q' = -e_n Q e_n`.
pub fn pq_split(a: &Multivector) -> (Multivector, Multivector, Multivector) {
    let n = a.n();
    let nbit = 1usize << (n - 1);
    let mut p = Multivector::zero(n);
    let mut q = Multivector::zero(n);
    for (mask, &v) in a.coeffs().iter().enumerate() {
        if mask & nbit == 0 {
            p.coeffs[mask] = v;
        } else {
            // e_A = e_{A \ n} e_n because e_n is the highest generator.
            q.coeffs[mask ^ nbit] = v;
        }
    }
    let en = Multivector::e(n, n);
    let qp = &(&(-&en) * &q) * &en;
    (p, q, qp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent blade multiplier: expand both blades to generator lists,
    /// bubble-sort while counting swaps, then cancel equal neighbours.
    fn oracle_blade(a: usize, b: usize) -> (f64, usize) {
        let mut gens: Vec<usize> = (0..MAX_N).filter(|i| a >> i & 1 == 1).collect();
        gens.extend((0..MAX_N).filter(|i| b >> i & 1 == 1));
        let mut sign = 1.0;
        for i in 0..gens.len() {
            for j in 0..gens.len() - 1 - i {
                if gens[j] > gens[j + 1] {
                    gens.swap(j, j + 1);
                    sign = -sign;
                }
            }
        }
        let mut out = Vec::new();
        let mut k = 0;
        while k < gens.len() {
            if k + 1 < gens.len() && gens[k] == gens[k + 1] {
                sign = -sign;
                k += 2;
            } else {
                out.push(gens[k]);
                k += 1;
            }
        }
        (sign, out.iter().map(|i| 1 << i).sum())
    }

    fn oracle_gp(x: &Multivector, y: &Multivector) -> Multivector {
        let mut out = Multivector::zero(x.n());
        for (a, &xa) in x.coeffs().iter().enumerate() {
            for (b, &yb) in y.coeffs().iter().enumerate() {
                let (s, c) = oracle_blade(a, b);
                out.coeffs[c] += s * xa * yb;
            }
        }
        out
    }

    fn mv(n: usize) -> impl Strategy<Value = Multivector> {
        prop::collection::vec(-3.0..3.0f64, 1 << n)
            .prop_map(move |c| Multivector::new(n, c).unwrap())
    }

    #[test]
    fn generator_examples() {
        let n = 2;
        let e1 = Multivector::e(n, 1);
        let e2 = Multivector::e(n, 2);
        assert_eq!(&e1 * &e2, Multivector::blade(n, 0b11, 1.0));
        assert_eq!(&e2 * &e1, Multivector::blade(n, 0b11, -1.0));
        assert_eq!(&e1 * &e1, Multivector::scalar(n, -1.0));
        let e12 = Multivector::blade(n, 0b11, 1.0);
        assert_eq!(&e12 * &e12, Multivector::scalar(n, -1.0));
        assert_eq!(&e12 * &e12, oracle_gp(&e12, &e12));
    }

    #[test]
    fn involution_examples() {
        let e12 = Multivector::blade(2, 0b11, 1.0);
        let e1 = Multivector::e(2, 1);
        assert_eq!(e12.involution(Involution::Reversion), &e12 * -1.0);
        assert_eq!(e1.involution(Involution::Conjugation), &e1 * -1.0);
        let composed = e12
            .involution(Involution::Conjugation)
            .involution(Involution::Reversion);
        assert_eq!(e12.involution(Involution::Bar), composed);
        assert_eq!(e12.involution(Involution::Bar), e12);
    }

    #[test]
    fn conjugation_reverses_products() {
        // (ab)^dagger = b^dagger a^dagger, checked on every blade pair of Cl_3.
        let n = 3;
        for a in 0..8 {
            for b in 0..8 {
                let x = Multivector::blade(n, a, 1.0);
                let y = Multivector::blade(n, b, 1.0);
                let lhs = (&x * &y).involution(Involution::Conjugation);
                let rhs = &y.involution(Involution::Conjugation) * &x.involution(Involution::Conjugation);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn hat_is_automorphism() {
        let n = 3;
        for a in 0..8 {
            for b in 0..8 {
                let x = Multivector::blade(n, a, 1.0);
                let y = Multivector::blade(n, b, 1.0);
                let lhs = (&x * &y).involution(Involution::Hat);
                let rhs = &x.involution(Involution::Hat) * &y.involution(Involution::Hat);
                assert_eq!(lhs, rhs);
            }
        }
        assert_eq!(
            Multivector::e(3, 3).involution(Involution::Hat),
            &Multivector::e(3, 3) * -1.0
        );
    }

    #[test]
    fn paravector_inverse_examples() {
        let x = Paravector::new(vec![0.0, 0.0, 3.0]).unwrap();
        let inv = x.invert().unwrap();
        assert_abs_diff_eq!(inv.get(0b10), -1.0 / 3.0, epsilon = 1e-15);
        let one = Paravector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(one.invert().unwrap(), Multivector::scalar(2, 1.0));
        assert!(matches!(
            Paravector::new(vec![0.0; 3]).unwrap().invert(),
            Err(CliffordError::SingularParavector)
        ));
    }

    #[test]
    fn paravector_inverse_by_linear_solve() {
        // Solve (e0 + e1) y = 1 by brute force in the 4-dimensional coefficient space.
        let x = Paravector::new(vec![1.0, 1.0, 0.0]).unwrap().embed();
        let mut m = nalgebra::DMatrix::<f64>::zeros(4, 4);
        for col in 0..4 {
            let prod = &x * &Multivector::blade(2, col, 1.0);
            for row in 0..4 {
                m[(row, col)] = prod.get(row);
            }
        }
        let rhs = nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let y = m.lu().solve(&rhs).unwrap();
        let expected = Paravector::new(vec![1.0, 1.0, 0.0]).unwrap().invert().unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(y[k], expected.get(k), epsilon = 1e-14);
        }
        assert_abs_diff_eq!(expected.get(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(expected.get(1), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn pq_split_examples() {
        let n = 2;
        let a = &Multivector::scalar(n, 2.0) + &Multivector::blade(n, 0b10, 3.0);
        let (p, q, qp) = pq_split(&a);
        assert_eq!(p, Multivector::scalar(n, 2.0));
        assert_eq!(q, Multivector::scalar(n, 3.0));
        assert_eq!(qp, Multivector::scalar(n, 3.0));

        let e1en = &Multivector::e(n, 1) * &Multivector::e(n, n);
        let a = &Multivector::scalar(n, 1.0) + &e1en;
        let (p, q, qp) = pq_split(&a);
        assert_eq!(p, Multivector::scalar(n, 1.0));
        assert_eq!(q, Multivector::e(n, 1));
        assert_eq!(qp, &Multivector::e(n, 1) * -1.0);

        let (p, q, qp) = pq_split(&Multivector::zero(n));
        assert!(p.norm2() == 0.0 && q.norm2() == 0.0 && qp.norm2() == 0.0);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let a = Multivector::zero(2);
        let b = Multivector::zero(3);
        assert!(matches!(a.gp(&b), Err(CliffordError::DimensionMismatch { .. })));
        assert!(Multivector::new(2, vec![0.0; 3]).is_err());
        assert!(Multivector::new(0, vec![0.0]).is_err());
    }

    #[test]
    fn slice_kernels_match_full_product() {
        let n = 3;
        let alg = algebra(n);
        let p = Paravector::new(vec![0.3, -1.2, 0.7, 2.0]).unwrap();
        let b = Multivector::new(n, (0..8).map(|i| (i as f64).sin()).collect()).unwrap();
        let mut left = vec![0.0; 8];
        alg.para_left_acc(p.components(), b.coeffs(), &mut left);
        assert!(Multivector::new(n, left).unwrap().max_abs_diff(&(&p.embed() * &b)) < 1e-14);
        let mut right = vec![0.0; 8];
        alg.para_right_acc(b.coeffs(), p.components(), &mut right);
        assert!(Multivector::new(n, right).unwrap().max_abs_diff(&(&b * &p.embed())) < 1e-14);
        let mut qp = vec![0.0; 8];
        alg.qprime_acc(1.0, b.coeffs(), &mut qp);
        assert!(Multivector::new(n, qp).unwrap().max_abs_diff(&pq_split(&b).2) < 1e-14);
    }

    proptest! {
        #[test]
        fn gp_matches_oracle(n in 1usize..=3, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = 1 << n;
            let x = Multivector::new(n, (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let y = Multivector::new(n, (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            prop_assert!(x.gp(&y).unwrap().max_abs_diff(&oracle_gp(&x, &y)) < 1e-12);
        }

        #[test]
        fn generators_anticommute(n in 1usize..=MAX_N, i in 1usize..=MAX_N, j in 1usize..=MAX_N) {
            prop_assume!(i <= n && j <= n);
            let ei = Multivector::e(n, i);
            let ej = Multivector::e(n, j);
            let sum = &(&ei * &ej) + &(&ej * &ei);
            let expected = if i == j { Multivector::scalar(n, -2.0) } else { Multivector::zero(n) };
            prop_assert_eq!(sum, expected);
        }

        #[test]
        fn product_is_associative(a in mv(3), b in mv(3), c in mv(3)) {
            let lhs = &(&a * &b) * &c;
            let rhs = &a * &(&b * &c);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-11);
        }

        #[test]
        fn involutions_are_involutive(a in mv(4)) {
            for kind in Involution::ALL {
                prop_assert_eq!(a.involution(kind).involution(kind), a.clone());
            }
        }

        #[test]
        fn pq_norms_add_up(a in mv(3)) {
            let (p, q, qp) = pq_split(&a);
            prop_assert!((p.norm2() + q.norm2() - a.norm2()).abs() < 1e-12);
            let rebuilt = &p + &(&q * &Multivector::e(3, 3));
            prop_assert!(rebuilt.max_abs_diff(&a) < 1e-15);
            prop_assert!((qp.norm2() - q.norm2()).abs() < 1e-12);
        }

        #[test]
        fn paravector_inverse_is_two_sided(c in prop::collection::vec(-5.0..5.0f64, 4)) {
            let x = Paravector::new(c).unwrap();
            prop_assume!(x.norm() > 1e-3);
            let inv = x.invert().unwrap();
            let one = Multivector::scalar(3, 1.0);
            prop_assert!((&x.embed() * &inv).max_abs_diff(&one) < 1e-12);
            prop_assert!((&inv * &x.embed()).max_abs_diff(&one) < 1e-12);
        }

        #[test]
        fn conjugation_gives_positive_norm(a in mv(3)) {
            let s = (&a.involution(Involution::Conjugation) * &a).scalar_part();
            prop_assert!((s - a.norm2()).abs() < 1e-12);
        }
    }
}
