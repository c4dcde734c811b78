//! Finite-difference stencils on box lattices and latitude-longitude grids.
//!
//! Fourth order is the default: central five-point stencils in the interior and
//! one-sided fourth-order stencils in the two layers next to a boundary or mask
//! edge. Second order (central, one-sided at the edge) is kept selectable.

use crate::clifford::{algebra, para_blade};
use crate::geometry::{CartesianLayout, LatLongLayout};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdOrder {
    Second,
    #[default]
    Fourth,
}

const CENTRAL4: [(i64, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const EDGE0: [f64; 5] = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25];
const EDGE1: [f64; 5] = [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0];

/// A stencil: up to five (offset, coefficient) pairs, coefficients in units of 1/h.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    pub len: usize,
    pub taps: [(i64, f64); 5],
}

impl Stencil {
    fn push(&mut self, off: i64, c: f64) {
        self.taps[self.len] = (off, c);
        self.len += 1;
    }

    fn from_iter(it: impl IntoIterator<Item = (i64, f64)>) -> Self {
        let mut s = Stencil::default();
        for (o, c) in it {
            s.push(o, c);
        }
        s
    }

    pub fn taps(&self) -> &[(i64, f64)] {
        &self.taps[..self.len]
    }
}

/// Choose a stencil from the set of available offsets.
pub fn choose_stencil(order: FdOrder, avail: impl Fn(i64) -> bool) -> Stencil {
    let all = |lo: i64, hi: i64| (lo..=hi).all(&avail);
    match order {
        FdOrder::Fourth => {
            if all(-2, 2) {
                return Stencil::from_iter(CENTRAL4);
            }
            if all(0, 4) && !avail(-1) {
                return Stencil::from_iter(EDGE0.iter().enumerate().map(|(k, &c)| (k as i64, c)));
            }
            if all(-1, 3) {
                return Stencil::from_iter(EDGE1.iter().enumerate().map(|(k, &c)| (k as i64 - 1, c)));
            }
            if all(-4, 0) && !avail(1) {
                return Stencil::from_iter(EDGE0.iter().enumerate().map(|(k, &c)| (-(k as i64), -c)));
            }
            if all(-3, 1) {
                return Stencil::from_iter(EDGE1.iter().enumerate().map(|(k, &c)| (1 - k as i64, -c)));
            }
            choose_stencil(FdOrder::Second, avail)
        }
        FdOrder::Second => {
            if all(-1, 1) {
                Stencil::from_iter([(-1, -0.5), (1, 0.5)])
            } else if all(0, 2) {
                Stencil::from_iter([(0, -1.5), (1, 2.0), (2, -0.5)])
            } else if all(-2, 0) {
                Stencil::from_iter([(0, 1.5), (-1, -2.0), (-2, 0.5)])
            } else if all(0, 1) {
                Stencil::from_iter([(0, -1.0), (1, 1.0)])
            } else if all(-1, 0) {
                Stencil::from_iter([(0, 1.0), (-1, -1.0)])
            } else {
                Stencil::default()
            }
        }
    }
}

/// Derivatives on a box lattice, optionally restricted to a membership mask.
pub struct BoxFd<'a> {
    layout: &'a CartesianLayout,
    member: Option<&'a [bool]>,
    order: FdOrder,
    strides: Vec<usize>,
}

impl<'a> BoxFd<'a> {
    pub fn new(layout: &'a CartesianLayout, member: Option<&'a [bool]>, order: FdOrder) -> Self {
        Self { layout, member, order, strides: layout.strides() }
    }

    pub fn is_member(&self, idx: usize) -> bool {
        self.member.is_none_or(|m| m[idx])
    }

    /// Neighbour of `idx` shifted by `off` along `axis`, with the bundle sign.
    fn neighbour(&self, idx: usize, multi: &[usize], axis: usize, off: i64) -> Option<(usize, f64)> {
        let n = self.layout.dims[axis] as i64;
        let mut j = multi[axis] as i64 + off;
        let mut sign = 1.0;
        match self.layout.periodic[axis] {
            Some(s) => {
                while j < 0 {
                    j += n;
                    sign *= s;
                }
                while j >= n {
                    j -= n;
                    sign *= s;
                }
            }
            None if j < 0 || j >= n => return None,
            None => {}
        }
        let nidx = (idx as i64 + (j - multi[axis] as i64) * self.strides[axis] as i64) as usize;
        if !self.is_member(nidx) {
            return None;
        }
        Some((nidx, sign))
    }

    /// Taps as (box index, coefficient / h) for the derivative along `axis` at `idx`.
    pub fn taps(&self, idx: usize, multi: &[usize], axis: usize) -> ([(usize, f64); 5], usize) {
        let st = choose_stencil(self.order, |o| self.neighbour(idx, multi, axis, o).is_some());
        let mut out = [(0usize, 0.0); 5];
        let inv_h = 1.0 / self.layout.h;
        for (k, &(o, c)) in st.taps().iter().enumerate() {
            let (j, s) = self.neighbour(idx, multi, axis, o).expect("stencil tap available");
            out[k] = (j, c * s * inv_h);
        }
        (out, st.len)
    }

    /// Dirac operator on box arrays: `out = sum_a s_a e_a d_a f`, with `s_0 = 1`
    /// and `s_a = -1` for `a >= 1` when `conj` (the conjugate operator).
    /// With `transpose`, applies the exact transpose of that linear map.
    pub fn dirac(&self, n: usize, conj: bool, transpose: bool, input: &[f64], out: &mut [f64]) {
        let dim = 1usize << n;
        let alg = algebra(n);
        let len = self.layout.box_len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = self.layout.dims.len();
        let mut tmp = vec![0.0; dim];
        for idx in 0..len {
            if !self.is_member(idx) {
                continue;
            }
            let multi = self.layout.unravel(idx);
            for axis in 0..d {
                let bi = para_blade(axis);
                let s_axis = if axis > 0 && conj { -1.0 } else { 1.0 };
                let (taps, count) = self.taps(idx, &multi, axis);
                if !transpose {
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    for &(j, c) in &taps[..count] {
                        for b in 0..dim {
                            tmp[b] += c * input[j * dim + b];
                        }
                    }
                    let o = &mut out[idx * dim..(idx + 1) * dim];
                    for b in 0..dim {
                        o[bi ^ b] += s_axis * alg.sign(bi, b) * tmp[b];
                    }
                } else {
                    // (e_a d)^T u = d^T (conj(e_a) u), conj(e_a) = -e_a for a >= 1.
                    let s_conj = if axis > 0 { -1.0 } else { 1.0 };
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    let u = &input[idx * dim..(idx + 1) * dim];
                    for b in 0..dim {
                        tmp[bi ^ b] += s_axis * s_conj * alg.sign(bi, b) * u[b];
                    }
                    for &(j, c) in &taps[..count] {
                        for b in 0..dim {
                            out[j * dim + b] += c * tmp[b];
                        }
                    }
                }
            }
        }
    }

    /// Scalar derivative along `axis` of a box array with `dim` components per cell.
    pub fn deriv(&self, axis: usize, dim: usize, input: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for idx in 0..self.layout.box_len() {
            if !self.is_member(idx) {
                continue;
            }
            let multi = self.layout.unravel(idx);
            let (taps, count) = self.taps(idx, &multi, axis);
            for &(j, c) in &taps[..count] {
                for b in 0..dim {
                    out[idx * dim + b] += c * input[j * dim + b];
                }
            }
        }
    }
}

/// Derivatives on a latitude-longitude grid of `S^2`.
///
/// Rows continue across the north pole onto the opposite meridian. On the full
/// sphere they also continue across the south pole; on the rp hemisphere rows
/// past the equator are read at the antipode with the bundle parity; on a cap
/// the edge rows use one-sided stencils.
pub struct SphereFd<'a> {
    layout: &'a LatLongLayout,
    order: FdOrder,
}

impl<'a> SphereFd<'a> {
    pub fn new(layout: &'a LatLongLayout, order: FdOrder) -> Self {
        Self { layout, order }
    }

    /// Cell index and sign for (possibly out-of-range) row `i` and column `j`.
    fn cell(&self, i: i64, j: i64) -> Option<(usize, f64)> {
        let l = self.layout;
        let nt = l.n_theta as i64;
        let np = l.n_phi as i64;
        let half = np / 2;
        let (mut i, mut j, mut sign) = (i, j, 1.0);
        let full = l.antipodal.is_none() && (l.theta_max - std::f64::consts::PI).abs() < 1e-12;
        for _ in 0..4 {
            if i < 0 {
                i = -1 - i;
                j += half;
            } else if i >= nt {
                if full {
                    i = 2 * nt - 1 - i;
                    j += half;
                } else if let Some(p) = l.antipodal {
                    i = 2 * nt - 1 - i;
                    j += half;
                    sign *= p;
                } else {
                    return None;
                }
            } else {
                break;
            }
        }
        let j = j.rem_euclid(np);
        Some(((i * np + j) as usize, sign))
    }

    fn taps_theta(&self, i: usize, j: usize) -> Vec<(usize, f64)> {
        let st = choose_stencil(self.order, |o| self.cell(i as i64 + o, j as i64).is_some());
        let inv = 1.0 / self.layout.dtheta;
        st.taps()
            .iter()
            .map(|&(o, c)| {
                let (k, s) = self.cell(i as i64 + o, j as i64).unwrap();
                (k, c * s * inv)
            })
            .collect()
    }

    fn taps_phi(&self, i: usize, j: usize) -> Vec<(usize, f64)> {
        let st = choose_stencil(self.order, |_| true);
        let inv = 1.0 / self.layout.dphi;
        st.taps()
            .iter()
            .map(|&(o, c)| (self.cell(i as i64, j as i64 + o).unwrap().0, c * inv))
            .collect()
    }

    /// `(d_theta f, d_phi f)` for a field with `dim` components per cell.
    pub fn partials(&self, dim: usize, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout;
        let mut dt = vec![0.0; input.len()];
        let mut dp = vec![0.0; input.len()];
        for i in 0..l.n_theta {
            for j in 0..l.n_phi {
                let c = i * l.n_phi + j;
                for (k, w) in self.taps_theta(i, j) {
                    for b in 0..dim {
                        dt[c * dim + b] += w * input[k * dim + b];
                    }
                }
                for (k, w) in self.taps_phi(i, j) {
                    for b in 0..dim {
                        dp[c * dim + b] += w * input[k * dim + b];
                    }
                }
            }
        }
        (dt, dp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, default_grid, ManifoldSpec, ReferenceDomain};

    #[test]
    fn stencils_are_exact_on_quartics() {
        for order in [FdOrder::Second, FdOrder::Fourth] {
            let deg = if order == FdOrder::Fourth { 4 } else { 2 };
            for missing_left in 0..3i64 {
                let st = choose_stencil(order, |o| o >= -missing_left && o <= 6);
                for p in 0..=deg {
                    let got: f64 = st.taps().iter().map(|&(o, c)| c * (o as f64).powi(p)).sum();
                    let want = if p == 1 { 1.0 } else { 0.0 };
                    assert!((got - want).abs() < 1e-12, "{order:?} {missing_left} p={p}");
                }
            }
        }
    }

    #[test]
    fn box_dirac_transpose_is_exact() {
        let spec = ManifoldSpec::cylinder(3, 1, 1);
        let grid = default_grid(&spec, 4).unwrap();
        let layout = grid.cartesian().unwrap();
        let fd = BoxFd::new(layout, None, FdOrder::Fourth);
        let dim = 8;
        let len = layout.box_len() * dim;
        let u: Vec<f64> = (0..len).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let v: Vec<f64> = (0..len).map(|i| ((i * 53 % 97) as f64).cos()).collect();
        for conj in [false, true] {
            let mut au = vec![0.0; len];
            let mut atv = vec![0.0; len];
            fd.dirac(3, conj, false, &u, &mut au);
            fd.dirac(3, conj, true, &v, &mut atv);
            let lhs: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&atv).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn sphere_partials_cross_the_pole() {
        // f = x_0 = sin t cos p: d_t f = cos t cos p, d_p f = -sin t sin p.
        let grid = build_grid(&ManifoldSpec::sphere(2), &ReferenceDomain::Cap { theta_max: std::f64::consts::PI }, 32).unwrap();
        let l = grid.latlong().unwrap();
        let f: Vec<f64> = (0..grid.len()).map(|c| grid.center(c)[0]).collect();
        let (dt, dp) = SphereFd::new(l, FdOrder::Fourth).partials(1, &f);
        let mut err: f64 = 0.0;
        for i in 0..l.n_theta {
            for j in 0..l.n_phi {
                let (t, p) = (l.theta(i), l.phi(j));
                let c = i * l.n_phi + j;
                err = err.max((dt[c] - t.cos() * p.cos()).abs()).max((dp[c] + t.sin() * p.sin()).abs());
            }
        }
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn hemisphere_parity_enters_the_equator_rows() {
        // Odd field x_2 on the rp bundle-2 hemisphere is smooth across the equator.
        let grid = default_grid(&ManifoldSpec::rp(2, 2), 16).unwrap();
        let l = grid.latlong().unwrap();
        let f: Vec<f64> = (0..grid.len()).map(|c| grid.center(c)[2]).collect();
        let (dt, _) = SphereFd::new(l, FdOrder::Fourth).partials(1, &f);
        let mut err: f64 = 0.0;
        for i in 0..l.n_theta {
            let c = i * l.n_phi;
            err = err.max((dt[c] + l.theta(i).sin()).abs());
        }
        assert!(err < 1e-4, "{err}");
    }
}
