//! Cauchy kernels on all six geometries.
//!
//! Closed-form kernels report `truncation_error = 0`. The cylinder lattice sum and
//! the Hopf dilation series are truncated and carry a rigorous tail bound in the
//! coefficient norm (paravector norms are multiplicative, so every summand's norm
//! is known exactly).

use crate::clifford::{CliffordError, Multivector, Paravector};
use crate::geometry::{Kind, ManifoldSpec};
use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_ur};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("kernel is singular at this pair of points")]
    Singular,
    #[error("point is not on the unit sphere (| |x| - 1 | = {0:e})")]
    OffSphere(f64),
    #[error("point is outside the annulus 1 <= |x| < 2")]
    OutsideAnnulus,
    #[error("point is not in the open upper half-space")]
    BelowHorizon,
    #[error("invalid kernel request: {0}")]
    Invalid(String),
}

/// Kernel value, its conjugate partner and a bound on the truncation error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: Multivector,
    pub conj_value: Multivector,
    pub truncation_error: f64,
}

/// Power of `|x - y|` in the denominator of a Euclidean kernel inside a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exponent {
    /// `n + 1`, the fundamental solution of `D_0` in `R^{n+1}`.
    #[default]
    Ambient,
    /// `n`, as printed in the Hopf kernel display.
    Literal,
}

impl Exponent {
    fn power(self, n: usize) -> i32 {
        match self {
            Exponent::Ambient => n as i32 + 1,
            Exponent::Literal => n as i32,
        }
    }
}

fn check_pair(x: &Paravector, y: &Paravector) -> Result<usize, KernelError> {
    if x.0.len() != y.0.len() {
        return Err(CliffordError::DimensionMismatch { left: x.n(), right: y.n() }.into());
    }
    crate::clifford::check_dim(x.n())?;
    Ok(x.n())
}

/// Paravector components of `bar(z) / |z|^p` written into `out`.
#[inline]
pub fn euclid_raw(z: &[f64], p: i32, out: &mut [f64]) {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let s = r2.sqrt().powi(-p);
    out[0] = z[0] * s;
    for i in 1..z.len() {
        out[i] = -z[i] * s;
    }
}

/// Components of `bar(z) / |z|^p` accumulated with weight `w`.
#[inline]
fn euclid_raw_acc(z: &[f64], p: i32, w: f64, out: &mut [f64]) {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let s = w * r2.sqrt().powi(-p);
    out[0] += z[0] * s;
    for i in 1..z.len() {
        out[i] -= z[i] * s;
    }
}

fn para_pair(comps: &[f64]) -> (Multivector, Multivector) {
    let v = Paravector(comps.to_vec());
    (v.embed(), v.bar().embed())
}

/// `G(x, y) = bar(x - y) / |x - y|^{n+1}`.
pub fn g_euclid(x: &Paravector, y: &Paravector) -> Result<KernelValue, KernelError> {
    let n = check_pair(x, y)?;
    let d = x.sub(y);
    if d.norm2() == 0.0 {
        return Err(KernelError::Singular);
    }
    let mut c = vec![0.0; n + 1];
    euclid_raw(&d.0, n as i32 + 1, &mut c);
    let (value, conj_value) = para_pair(&c);
    Ok(KernelValue { value, conj_value, truncation_error: 0.0 })
}

fn check_on_sphere(x: &Paravector) -> Result<(), KernelError> {
    let dev = (x.norm() - 1.0).abs();
    if dev > 1e-10 {
        return Err(KernelError::OffSphere(dev));
    }
    Ok(())
}

/// Spherical kernel `bar(x - y) / |x - y|^n` on `S^n`.
pub fn g_sphere(x: &Paravector, y: &Paravector) -> Result<KernelValue, KernelError> {
    let n = check_pair(x, y)?;
    check_on_sphere(x)?;
    check_on_sphere(y)?;
    let d = x.sub(y);
    if d.norm2() == 0.0 {
        return Err(KernelError::Singular);
    }
    let mut c = vec![0.0; n + 1];
    euclid_raw(&d.0, n as i32, &mut c);
    let (value, conj_value) = para_pair(&c);
    Ok(KernelValue { value, conj_value, truncation_error: 0.0 })
}

/// Projective kernel `G_s(x, y) +- G_s(-x, y)` (bundle 1: sum, bundle 2: difference).
pub fn g_rp(x: &Paravector, y: &Paravector, bundle: usize) -> Result<KernelValue, KernelError> {
    let sign = match bundle {
        1 => 1.0,
        2 => -1.0,
        b => return Err(KernelError::Invalid(format!("rp bundle {b}"))),
    };
    let a = g_sphere(x, y)?;
    let b = g_sphere(&x.scale(-1.0), y)?;
    Ok(KernelValue {
        value: &a.value + &(&b.value * sign),
        conj_value: &a.conj_value + &(&b.conj_value * sign),
        truncation_error: 0.0,
    })
}

/// Lattice vectors of `Z^k` with max-norm exactly `s`, in lexicographic order.
pub fn lattice_shell(k: usize, s: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let side = 2 * s + 1;
    let total = (side as usize).pow(k as u32);
    for t in 0..total {
        let mut rem = t;
        let mut m = vec![0i64; k];
        for slot in m.iter_mut().rev() {
            *slot = (rem % side as usize) as i64 - s;
            rem /= side as usize;
        }
        if m.iter().map(|v| v.abs()).max().unwrap_or(0) == s {
            out.push(m);
        }
    }
    out
}

/// Number of vectors of `Z^k` with max-norm exactly `s`.
fn shell_count(k: usize, s: u64) -> f64 {
    if s == 0 {
        return 1.0;
    }
    ((2 * s + 1) as f64).powi(k as i32) - ((2 * s - 1) as f64).powi(k as i32)
}

/// Tail bound for the truncated cylinder sum.
///
/// Every omitted term has norm `|d + m|^{-n}` with `|d + m| >= s - rho` on the
/// shell of max-norm `s`, where `rho` is the largest lattice coordinate of `d`.
/// The shells `R+1 ..= 64R` are summed exactly; beyond that
/// `N_s <= 2k (3s)^{k-1}` and `s - rho >= s/2` give the integral bound
/// `2k 3^{k-1} 2^n S^{k-n} / (n-k)`. Overall the bound behaves like `C R^{k-n}`.
pub fn cylinder_tail_bound(n: usize, k: usize, truncation: usize, rho: f64) -> f64 {
    let r = truncation as u64;
    if (r as f64) <= rho {
        return f64::INFINITY;
    }
    let big_s = 64 * r.max(1);
    let mut sum = 0.0;
    for s in (r + 1)..=big_s {
        sum += shell_count(k, s) * (s as f64 - rho).powi(-(n as i32));
    }
    let sf = big_s as f64;
    sum + 2.0 * k as f64 * 3f64.powi(k as i32 - 1) * 2f64.powi(n as i32) * sf.powi(k as i32 - n as i32)
        / (n - k) as f64
}

/// Truncated lattice `{m : |m|_inf <= R}` with bundle signs, shells in order.
pub fn cylinder_lattice(spec: &ManifoldSpec) -> Vec<(Vec<f64>, f64)> {
    (0..=spec.truncation as i64)
        .flat_map(|s| lattice_shell(spec.k, s))
        .map(|m| {
            let sign = spec.lattice_sign(&m);
            (m.iter().map(|v| *v as f64).collect(), sign)
        })
        .collect()
}

/// Lattice sum of `bar(z) / |z|^p` over `z = d + m`, accumulated into `out`;
/// terms with `z = 0` are skipped.
pub fn cylinder_raw_on(d: &[f64], lattice: &[(Vec<f64>, f64)], p: i32, out: &mut [f64]) {
    let mut z = d.to_vec();
    for (m, sign) in lattice {
        for (a, ma) in m.iter().enumerate() {
            z[a] = d[a] + ma;
        }
        if z.iter().all(|v| *v == 0.0) {
            continue;
        }
        euclid_raw_acc(&z, p, *sign, out);
    }
}

/// Paravector components of the truncated cylinder kernel at offset `d = x - y`,
/// accumulated into `out`, with the lattice term `m = 0` optionally skipped.
pub fn cylinder_raw(d: &[f64], spec: &ManifoldSpec, exponent: Exponent, skip_origin: bool, out: &mut [f64]) {
    let mut lattice = cylinder_lattice(spec);
    if skip_origin {
        lattice.remove(0);
    }
    cylinder_raw_on(d, &lattice, exponent.power(spec.n), out);
}

/// Truncated cylinder kernel `cot_{k,l}(x, y)`.
///
/// Signed over the first `l` lattice directions, unsigned over the remaining
/// `k - l`, all lattice vectors with max-norm at most `spec.truncation`.
pub fn cot_cylinder(x: &Paravector, y: &Paravector, spec: &ManifoldSpec) -> Result<KernelValue, KernelError> {
    cot_cylinder_with(x, y, spec, Exponent::Ambient)
}

pub fn cot_cylinder_with(
    x: &Paravector,
    y: &Paravector,
    spec: &ManifoldSpec,
    exponent: Exponent,
) -> Result<KernelValue, KernelError> {
    let n = check_pair(x, y)?;
    if spec.kind != Kind::Cylinder || spec.n != n {
        return Err(KernelError::Invalid("cot_cylinder needs a matching cylinder spec".into()));
    }
    spec.validate().map_err(|e| KernelError::Invalid(e.to_string()))?;
    let d = x.sub(y);
    let on_lattice = d.0[spec.k..].iter().all(|v| *v == 0.0)
        && d.0[..spec.k].iter().all(|v| v.fract() == 0.0);
    if on_lattice {
        return Err(KernelError::Singular);
    }
    let mut c = vec![0.0; n + 1];
    cylinder_raw(&d.0, spec, exponent, false, &mut c);
    let rho = d.0[..spec.k].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tail_n = match exponent {
        Exponent::Ambient => n,
        Exponent::Literal => n - 1,
    };
    let err = if tail_n > spec.k {
        cylinder_tail_bound(tail_n, spec.k, spec.truncation, rho)
    } else {
        f64::INFINITY
    };
    let (value, conj_value) = para_pair(&c);
    Ok(KernelValue { value, conj_value, truncation_error: err })
}

fn check_annulus(x: &Paravector) -> Result<(), KernelError> {
    let r = x.norm();
    if !(1.0..2.0).contains(&r) {
        return Err(KernelError::OutsideAnnulus);
    }
    Ok(())
}

/// Truncated Hopf kernel `C = C_1 + 2^{2-2n} C_2`.
///
/// `C_1 = sum_{k=0}^{K} G(2^k x - 2^k y)` and
/// `C_2 = G(x) [sum_{k=1}^{K} G(2^k x^{-1} - 2^k y^{-1})] G(y)`, `K = spec.truncation`.
pub fn c_hopf(x: &Paravector, y: &Paravector, spec: &ManifoldSpec) -> Result<KernelValue, KernelError> {
    c_hopf_with(x, y, spec, Exponent::Ambient)
}

pub fn c_hopf_with(
    x: &Paravector,
    y: &Paravector,
    spec: &ManifoldSpec,
    exponent: Exponent,
) -> Result<KernelValue, KernelError> {
    let n = check_pair(x, y)?;
    if spec.kind != Kind::Hopf || spec.n != n {
        return Err(KernelError::Invalid("c_hopf needs a matching hopf spec".into()));
    }
    if spec.truncation < 1 {
        return Err(KernelError::Invalid("truncation must be at least 1".into()));
    }
    check_annulus(x)?;
    check_annulus(y)?;
    let d = x.sub(y);
    if d.norm2() == 0.0 {
        return Err(KernelError::Singular);
    }
    let p = exponent.power(n);
    let big_k = spec.truncation as i32;
    let xinv = para_inverse(x);
    let yinv = para_inverse(y);
    let dinv = xinv.sub(&yinv);

    let mut c1 = vec![0.0; n + 1];
    let mut c1b = vec![0.0; n + 1];
    let mut mid = vec![0.0; n + 1];
    let mut midb = vec![0.0; n + 1];
    for k in 0..=big_k {
        let s = 2f64.powi(k);
        let z: Vec<f64> = d.0.iter().map(|v| v * s).collect();
        euclid_raw_acc(&z, p, 1.0, &mut c1);
        conj_raw_acc(&z, p, &mut c1b);
    }
    for k in 1..=big_k {
        let s = 2f64.powi(k);
        let z: Vec<f64> = dinv.0.iter().map(|v| v * s).collect();
        euclid_raw_acc(&z, p, 1.0, &mut mid);
        conj_raw_acc(&z, p, &mut midb);
    }
    let g = |v: &Paravector| {
        let mut c = vec![0.0; n + 1];
        euclid_raw(&v.0, p, &mut c);
        Paravector(c)
    };
    let gx = g(x);
    let gy = g(y);
    let factor = 2f64.powi(2 - 2 * n as i32);
    let c2 = &(&gx.embed() * &Paravector(mid).embed()) * &gy.embed();
    let c2b = &(&gx.bar().embed() * &Paravector(midb).embed()) * &gy.bar().embed();
    let value = &Paravector(c1).embed() + &(&c2 * factor);
    let conj_value = &Paravector(c1b).embed() + &(&c2b * factor);

    // Geometric tails: the k-th summands have norms 2^{-kq} |d|^{-q} and
    // 2^{-kq} |x^{-1} - y^{-1}|^{-q} |x|^{-q} |y|^{-q}, q = p - 1.
    let q = p - 1;
    let ratio = 2f64.powi(-q);
    let tail = ratio.powi(big_k + 1) / (1.0 - ratio);
    let err = tail * d.norm().powi(-q)
        + factor * tail * dinv.norm().powi(-q) * x.norm().powi(-q) * y.norm().powi(-q);
    Ok(KernelValue { value, conj_value, truncation_error: err })
}

fn conj_raw_acc(z: &[f64], p: i32, out: &mut [f64]) {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let s = r2.sqrt().powi(-p);
    for i in 0..z.len() {
        out[i] += z[i] * s;
    }
}

/// `x^{-1}` as a paravector.
pub fn para_inverse(x: &Paravector) -> Paravector {
    let r2 = x.norm2();
    x.bar().scale(1.0 / r2)
}

/// Components of the hyperbolic kernels `E(x, y)` and `F(x, y)` written into
/// `e` and `f` (paravector components). Returns false when `x = y`.
#[inline]
pub fn ef_raw(x: &[f64], y: &[f64], e: &mut [f64], f: &mut [f64]) -> bool {
    let n = x.len() - 1;
    let mut r2 = 0.0;
    let mut a2 = 0.0;
    for i in 0..n {
        let d = x[i] - y[i];
        r2 += d * d;
        a2 += d * d;
    }
    let dn = x[n] - y[n];
    let sn = x[n] + y[n];
    r2 += dn * dn;
    a2 += sn * sn;
    if r2 == 0.0 {
        return false;
    }
    // |x - y^| = |x^ - y| = a; (x - y)^{-1} = bar(x - y) / r^2.
    let denom = (r2 * a2).sqrt().powi(n as i32 - 1);
    let se = 1.0 / (r2 * denom);
    let sf = 1.0 / (a2 * denom);
    e[0] = (x[0] - y[0]) * se;
    f[0] = (x[0] - y[0]) * sf;
    for i in 1..n {
        e[i] = -(x[i] - y[i]) * se;
        f[i] = -(x[i] - y[i]) * sf;
    }
    if n >= 1 {
        e[n] = -dn * se;
        f[n] = sn * sf;
    }
    true
}

/// Hyperbolic kernels
/// `E = (x - y)^{-1} / (|x - y|^{n-1} |x - y^|^{n-1})` and
/// `F = (x^ - y)^{-1} / (|x - y|^{n-1} |x^ - y|^{n-1})`.
pub fn ef_hyperbolic(x: &Paravector, y: &Paravector) -> Result<(Multivector, Multivector), KernelError> {
    let n = check_pair(x, y)?;
    if x.0[n] <= 0.0 || y.0[n] <= 0.0 {
        return Err(KernelError::BelowHorizon);
    }
    let mut e = vec![0.0; n + 1];
    let mut f = vec![0.0; n + 1];
    if !ef_raw(&x.0, &y.0, &mut e, &mut f) {
        return Err(KernelError::Singular);
    }
    Ok((Paravector(e).embed(), Paravector(f).embed()))
}

/// `Z_d = zeta_{Z^d}(d - 2) / d`, the Epstein zeta value governing the local
/// error of the punctured midpoint rule for a kernel homogeneous of degree `1 - d`.
///
/// Computed by Ewald splitting; `Z_2 = -1/2` since every Epstein zeta of a unit
/// lattice equals -1 at the origin.
pub fn lattice_constant(d: usize) -> f64 {
    assert!(d >= 2, "lattice constant needs d >= 2");
    if d == 2 {
        return -0.5;
    }
    let s = (d - 2) as f64;
    let df = d as f64;
    // x^{-a} Gamma(a, x) = x^{-a} Q(a, x) Gamma(a)
    let upper = |a: f64, x: f64| x.powf(-a) * gamma_ur(a, x) * gamma(a);
    let m = 6i64;
    let side = (2 * m + 1) as usize;
    let mut total = -2.0 / s - 2.0 / (df - s);
    for t in 0..side.pow(d as u32) {
        let mut rem = t;
        let mut m2 = 0i64;
        for _ in 0..d {
            let v = (rem % side) as i64 - m;
            rem /= side;
            m2 += v * v;
        }
        if m2 == 0 {
            continue;
        }
        let x = std::f64::consts::PI * m2 as f64;
        total += upper(s / 2.0, x) + upper((df - s) / 2.0, x);
    }
    let zeta = total * std::f64::consts::PI.powf(s / 2.0) / gamma(s / 2.0);
    zeta / df
}

/// Ratio `C / G(x - y)`: the Hopf kernel collapses to a multiple of the
/// Euclidean kernel because `C_2(x, y) = G(y - x)`. `kappa(K)` at truncation K.
pub fn hopf_kappa(n: usize, truncation: usize) -> f64 {
    let q = 2f64.powi(-(n as i32));
    let k = truncation as i32;
    let c1 = (1.0 - q.powi(k + 1)) / (1.0 - q);
    let c2 = q * (1.0 - q.powi(k)) / (1.0 - q);
    c1 - 2f64.powi(2 - 2 * n as i32) * c2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::Multivector;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(c: &[f64]) -> Paravector {
        Paravector(c.to_vec())
    }

    fn rand_pv(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Paravector {
        Paravector((0..=n).map(|_| rng.random_range(-scale..scale)).collect())
    }

    fn unit(rng: &mut ChaCha8Rng, n: usize) -> Paravector {
        let v = rand_pv(rng, n, 1.0);
        v.scale(1.0 / v.norm())
    }

    #[test]
    fn euclid_examples() {
        let k = g_euclid(&pv(&[0.0, 0.0, 0.0]), &pv(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(k.value, Multivector::e(2, 1));
        assert_eq!(k.truncation_error, 0.0);
        assert!(matches!(g_euclid(&pv(&[1.0, 0.0, 0.0]), &pv(&[1.0, 0.0, 0.0])), Err(KernelError::Singular)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = rand_pv(&mut rng, 2, 1.0);
            let y = rand_pv(&mut rng, 2, 1.0);
            let a = g_euclid(&x, &y).unwrap().value;
            let b = g_euclid(&y, &x).unwrap().value;
            assert!((&a + &b).norm() < 1e-12 * a.norm());
        }
    }

    /// Central-difference Dirac operator in `y` of `y -> G(x, y)`, acting from the right.
    fn fd_dirac_right(x: &Paravector, y: &Paravector, step: f64) -> Multivector {
        let n = x.n();
        let mut acc = Multivector::zero(n);
        for i in 0..=n {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp.0[i] += step;
            ym.0[i] -= step;
            let d = &(&g_euclid(x, &yp).unwrap().value - &g_euclid(x, &ym).unwrap().value) * (0.5 / step);
            let ei = if i == 0 { Multivector::scalar(n, 1.0) } else { Multivector::e(n, i) };
            acc += &(&d * &ei);
        }
        acc
    }

    #[test]
    fn euclid_kernel_is_monogenic_in_y() {
        // G(x, .) is right monogenic in y away from x.
        let x = pv(&[0.1, -0.2, 0.3]);
        let y = pv(&[0.1 + 0.6, -0.2 + 0.8, 0.3]);
        assert!(fd_dirac_right(&x, &y, 1e-3).norm() <= 1e-4);
    }

    #[test]
    fn sphere_examples() {
        let k = g_sphere(&pv(&[1.0, 0.0, 0.0]), &pv(&[-1.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(k.value.get(0), 0.5, max_relative = 1e-15);
        assert!(matches!(g_sphere(&pv(&[1.1, 0.0, 0.0]), &pv(&[1.0, 0.0, 0.0])), Err(KernelError::OffSphere(_))));
        let k = g_sphere(&pv(&[1.0, 0.0, 0.0]), &pv(&[0.0, 0.0, 1.0])).unwrap();
        assert_relative_eq!(k.value.norm(), 2f64.powf(-0.5), max_relative = 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = unit(&mut rng, 2);
            let y = unit(&mut rng, 2);
            let k = g_sphere(&x, &y).unwrap();
            assert_relative_eq!(k.value.norm(), x.sub(&y).norm().powi(-1), max_relative = 1e-12);
        }
    }

    #[test]
    fn rp_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = unit(&mut rng, 2);
            let y = unit(&mut rng, 2);
            let mx = x.scale(-1.0);
            let a1 = g_rp(&x, &y, 1).unwrap().value;
            let b1 = g_rp(&mx, &y, 1).unwrap().value;
            assert!(a1.max_abs_diff(&b1) < 1e-12 * a1.norm().max(1.0));
            let a2 = g_rp(&x, &y, 2).unwrap().value;
            let b2 = g_rp(&mx, &y, 2).unwrap().value;
            assert!((&a2 + &b2).norm() < 1e-12 * a2.norm().max(1.0));
            let sum = &g_sphere(&x, &y).unwrap().value + &g_sphere(&mx, &y).unwrap().value;
            assert!(a1.max_abs_diff(&sum) == 0.0);
        }
        let x = pv(&[0.0, 0.0, 1.0]);
        assert!(g_rp(&x, &x.scale(-1.0), 1).is_err());
    }

    #[test]
    fn cylinder_truncation_and_periodicity() {
        let x = pv(&[0.3, 0.2, -0.1, 0.4, 0.05]);
        let y = pv(&[0.1, -0.3, 0.2, 0.0, -0.2]);
        let shift = |p: &Paravector| {
            let mut q = p.clone();
            q.0[0] += 1.0;
            q
        };
        for l in [0, 1] {
            let spec = ManifoldSpec::cylinder(4, 1, l).with_truncation(10);
            let oracle = cot_cylinder(&x, &y, &spec.with_truncation(20)).unwrap();
            let k = cot_cylinder(&x, &y, &spec).unwrap();
            assert!(k.value.max_abs_diff(&oracle.value) <= k.truncation_error);
            let ks = cot_cylinder(&shift(&x), &y, &spec).unwrap();
            let expect = if l == 0 { oracle.value.clone() } else { -&oracle.value };
            assert!(
                ks.value.max_abs_diff(&expect) <= 2.0 * ks.truncation_error.max(k.truncation_error),
                "l = {l}"
            );
        }
        let spec = ManifoldSpec::cylinder(4, 1, 0);
        assert!(matches!(cot_cylinder(&pv(&[1.0, 0.0, 0.0, 0.0, 0.0]), &pv(&[0.0; 5]), &spec), Err(KernelError::Singular)));
        assert!(cot_cylinder(&x, &y, &spec.with_truncation(0)).is_err());
    }

    #[test]
    fn cylinder_tail_bound_behaves_like_power_law() {
        let a = cylinder_tail_bound(4, 1, 10, 0.5);
        let b = cylinder_tail_bound(4, 1, 20, 0.5);
        let slope = (a / b).log2();
        assert!((slope - 3.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn hopf_examples() {
        let spec = ManifoldSpec::hopf(2).with_truncation(20);
        let x = pv(&[0.0, 1.0, 0.0]);
        let y = pv(&[0.0, 1.5, 0.0]);
        let k = c_hopf(&x, &y, &spec).unwrap();
        // Independent summation with explicit products, no shared helpers.
        let g = |v: &Paravector| -> Multivector {
            let r = v.norm();
            &v.bar().embed() * (1.0 / r.powi(3))
        };
        let inv = |v: &Paravector| v.bar().scale(1.0 / v.norm2());
        let mut c1 = Multivector::zero(2);
        for kk in 0..=20 {
            c1 += &g(&x.sub(&y).scale(2f64.powi(kk)));
        }
        let mut mid = Multivector::zero(2);
        for kk in 1..=20 {
            mid += &g(&inv(&x).sub(&inv(&y)).scale(2f64.powi(kk)));
        }
        let c2 = &(&g(&x) * &mid) * &g(&y);
        let oracle = &c1 + &(&c2 * 2f64.powi(-2));
        assert!(k.value.max_abs_diff(&oracle) < 1e-10);

        let k5 = c_hopf(&x, &y, &spec.with_truncation(25)).unwrap();
        assert!(k.value.max_abs_diff(&k5.value) <= k.truncation_error);
        assert!(c_hopf(&x, &pv(&[0.0, 2.5, 0.0]), &spec).is_err());
    }

    #[test]
    fn hopf_summand_homogeneity() {
        let x = pv(&[0.2, 1.1, -0.3]);
        let y = pv(&[-0.4, 0.9, 0.8]);
        let g0 = g_euclid(&x, &y).unwrap().value;
        for k in 1..4 {
            let s = 2f64.powi(k);
            let gk = g_euclid(&x.scale(s), &y.scale(s)).unwrap().value;
            assert!(gk.max_abs_diff(&(&g0 * 2f64.powi(-2 * k))) < 1e-14);
        }
    }

    #[test]
    fn hopf_kernel_collapses_to_multiple_of_euclid() {
        let spec = ManifoldSpec::hopf(2).with_truncation(30);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = loop {
                let v = rand_pv(&mut rng, 2, 2.0);
                if (1.0..2.0).contains(&v.norm()) {
                    break v;
                }
            };
            let y = loop {
                let v = rand_pv(&mut rng, 2, 2.0);
                if (1.0..2.0).contains(&v.norm()) {
                    break v;
                }
            };
            let c = c_hopf(&x, &y, &spec).unwrap().value;
            let g = &g_euclid(&x, &y).unwrap().value * hopf_kappa(2, 30);
            assert!(c.max_abs_diff(&g) < 1e-9 * g.norm());
        }
    }

    #[test]
    fn hyperbolic_examples() {
        let (e, f) = ef_hyperbolic(&pv(&[0.0, 0.0, 1.0]), &pv(&[0.0, 0.0, 2.0])).unwrap();
        assert!(e.max_abs_diff(&(&Multivector::e(2, 2) * (1.0 / 3.0))) < 1e-15);
        // Direct substitution: x^ - y = -3 e_2, (-3 e_2)^{-1} = e_2 / 3, divided by 1 * 3.
        assert!(f.max_abs_diff(&(&Multivector::e(2, 2) * (1.0 / 9.0))) < 1e-15);
        assert!(ef_hyperbolic(&pv(&[0.0, 0.0, -1.0]), &pv(&[0.0, 0.0, 2.0])).is_err());
        let x = pv(&[0.0, 0.0, 1.0]);
        let near = |t: f64| ef_hyperbolic(&x, &pv(&[t, 0.0, 1.0])).unwrap().0.norm();
        let slope = (near(1e-1) / near(1e-2)).log10();
        assert!((slope + 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn lattice_constants_match_direct_sums() {
        assert_relative_eq!(lattice_constant(3), -0.945766, epsilon = 1e-5);
        // Independent check: Gaussian-regularized lattice sum minus the matching
        // integral, for d = 4 where the summand is |m|^{-2}. The regularization
        // error is O(R^{-2}); two radii and a Richardson step remove it.
        let d = 4usize;
        let direct = |big_r: f64| {
            let m = (7.0 * big_r) as i64;
            let mut base = vec![0.0f64; (m * m + 1) as usize];
            for v in -m..=m {
                base[(v * v) as usize] += 1.0;
            }
            let mut counts = base.clone();
            for _ in 1..d {
                let mut next = vec![0.0; counts.len()];
                for (i, &c) in counts.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    for (j, &b) in base.iter().enumerate() {
                        if i + j < next.len() {
                            next[i + j] += c * b;
                        }
                    }
                }
                counts = next;
            }
            let mut s = 0.0;
            for (k, &c) in counts.iter().enumerate().skip(1) {
                s += c * (k as f64).powf((2.0 - d as f64) / 2.0) * (-(k as f64) / (big_r * big_r)).exp();
            }
            let area = 2.0 * std::f64::consts::PI.powi(2);
            (s - area * big_r * big_r / 2.0) / d as f64
        };
        let extrapolated = (4.0 * direct(8.0) - direct(4.0)) / 3.0;
        assert!(
            (extrapolated - lattice_constant(4)).abs() < 1e-3,
            "{extrapolated} vs {}",
            lattice_constant(4)
        );
    }

    proptest! {
        #[test]
        fn euclid_norm_is_power_law(x in prop::collection::vec(-1.0..1.0f64, 4), y in prop::collection::vec(-1.0..1.0f64, 4)) {
            let (x, y) = (Paravector(x), Paravector(y));
            let r = x.sub(&y).norm();
            prop_assume!(r > 1e-3);
            let k = g_euclid(&x, &y).unwrap();
            prop_assert!((k.value.norm() * r.powi(3) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn rp_kernels_have_bundle_parity(a in prop::collection::vec(-1.0..1.0f64, 3), b in prop::collection::vec(-1.0..1.0f64, 3)) {
            let (x, y) = (Paravector(a), Paravector(b));
            prop_assume!(x.norm() > 0.1 && y.norm() > 0.1);
            let x = x.scale(1.0 / x.norm());
            let y = y.scale(1.0 / y.norm());
            prop_assume!(x.sub(&y).norm() > 1e-3 && x.scale(-1.0).sub(&y).norm() > 1e-3);
            let p = g_rp(&x, &y, 2).unwrap().value;
            let q = g_rp(&x.scale(-1.0), &y, 2).unwrap().value;
            prop_assert!((&p + &q).norm() <= 1e-10 * p.norm().max(1.0));
        }
    }
}
