//! FFT convolution of box fields with paravector-valued kernels.
//!
//! Non-periodic axes are zero-padded to twice their length (linear convolution);
//! lattice axes use a cyclic transform, twisted into a negacyclic one when the
//! bundle flips sign across the period.

use crate::clifford::{algebra, para_blade};
use crate::geometry::CartesianLayout;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// In-place multidimensional FFT over a row-major array (axis 0 slowest).
/// The inverse transform is normalized.
pub fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let mut planner = FftPlanner::<f64>::new();
    for a in 0..dims.len() {
        let len = dims[a];
        if len == 1 {
            continue;
        }
        let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let stride: usize = dims[a + 1..].iter().product();
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let block = len * stride;
        let mut buf = vec![Complex64::new(0.0, 0.0); block];
        for chunk in data.chunks_mut(block) {
            // transpose len x stride -> stride x len, transform rows, transpose back
            for i in 0..len {
                for s in 0..stride {
                    buf[s * len + i] = chunk[i * stride + s];
                }
            }
            fft.process(&mut buf);
            for i in 0..len {
                for s in 0..stride {
                    chunk[i * stride + s] = buf[s * len + i];
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Precomputed kernel spectrum for repeated convolutions on one box layout.
pub struct Convolver {
    n: usize,
    dims: Vec<usize>,
    fdims: Vec<usize>,
    /// Per axis: `Some(sign)` for lattice axes.
    periodic: Vec<Option<f64>>,
    kernel_hat: Vec<Vec<Complex64>>,
}

fn unravel(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for a in (0..dims.len()).rev() {
        out[a] = idx % dims[a];
        idx /= dims[a];
    }
}

impl Convolver {
    /// `kernel(z, out)` writes the paravector components of the kernel at
    /// offset `z = x - y`; it is called at `z = 0` too and must return the
    /// punctured value there.
    pub fn new<K>(layout: &CartesianLayout, n: usize, kernel: K) -> Self
    where
        K: Fn(&[f64], &mut [f64]) + Sync,
    {
        let d = layout.dims.len();
        let dims = layout.dims.clone();
        let fdims: Vec<usize> = (0..d)
            .map(|a| if layout.periodic[a].is_some() { dims[a] } else { 2 * dims[a] })
            .collect();
        let total: usize = fdims.iter().product();
        let h = layout.h;
        let periodic = layout.periodic.clone();
        let sample = |t: usize, k: &mut [f64]| -> (f64, f64) {
            let mut multi = vec![0usize; d];
            unravel(t, &fdims, &mut multi);
            let mut z = vec![0.0; d];
            let mut twist = 0.0;
            for a in 0..d {
                let j = multi[a];
                let delta = match periodic[a] {
                    Some(s) => {
                        if s < 0.0 {
                            twist += j as f64 / dims[a] as f64;
                        }
                        j as f64
                    }
                    None if j < dims[a] => j as f64,
                    None if j == dims[a] => {
                        k.iter_mut().for_each(|v| *v = 0.0);
                        return (0.0, 0.0);
                    }
                    None => j as f64 - fdims[a] as f64,
                };
                z[a] = delta * h;
            }
            kernel(&z, k);
            (PI * twist).sin_cos()
        };
        let mut kernel_hat = vec![vec![Complex64::new(0.0, 0.0); total]; n + 1];
        // bounded chunks keep the transient sample storage small
        const CHUNK: usize = 1 << 16;
        for start in (0..total).step_by(CHUNK) {
            let end = (start + CHUNK).min(total);
            let block: Vec<f64> = (start..end)
                .into_par_iter()
                .flat_map_iter(|t| {
                    let mut k = vec![0.0; n + 1];
                    let (s, c) = sample(t, &mut k);
                    k.into_iter().flat_map(move |v| [v * c, v * s])
                })
                .collect();
            for (off, t) in (start..end).enumerate() {
                let base = off * 2 * (n + 1);
                for i in 0..=n {
                    kernel_hat[i][t] = Complex64::new(block[base + 2 * i], block[base + 2 * i + 1]);
                }
            }
        }
        for kh in kernel_hat.iter_mut() {
            fft_nd(kh, &fdims, false);
        }
        Self { n, dims, fdims, periodic, kernel_hat }
    }

    fn twist_phase(&self, multi: &[usize]) -> f64 {
        let mut t = 0.0;
        for (a, p) in self.periodic.iter().enumerate() {
            if let Some(s) = p {
                if *s < 0.0 {
                    t += multi[a] as f64 / self.dims[a] as f64;
                }
            }
        }
        PI * t
    }

    /// `out[x] = sum_y K(x - y) input[y]` (left Clifford product), box arrays of
    /// `box_len * 2^n` coefficients. `out` is overwritten.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        let dim = 1usize << self.n;
        let d = self.dims.len();
        let total: usize = self.fdims.iter().product();
        let box_len: usize = self.dims.iter().product();
        assert_eq!(input.len(), box_len * dim);
        assert_eq!(out.len(), box_len * dim);
        let twisted = self.periodic.iter().any(|p| matches!(p, Some(s) if *s < 0.0));
        let fstrides: Vec<usize> = (0..d).map(|a| self.fdims[a + 1..].iter().product()).collect();
        let place = |cell: usize, multi: &mut [usize]| -> usize {
            unravel(cell, &self.dims, multi);
            multi.iter().zip(&fstrides).map(|(i, s)| i * s).sum()
        };

        let mut spectra: Vec<Option<Vec<Complex64>>> = vec![None; dim];
        let mut multi = vec![0usize; d];
        for (b, slot) in spectra.iter_mut().enumerate() {
            if input.iter().skip(b).step_by(dim).all(|v| *v == 0.0) {
                continue;
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); total];
            for cell in 0..box_len {
                let v = input[cell * dim + b];
                if v == 0.0 {
                    continue;
                }
                let pos = place(cell, &mut multi);
                buf[pos] = if twisted {
                    let (s, c) = self.twist_phase(&multi).sin_cos();
                    Complex64::new(v * c, v * s)
                } else {
                    Complex64::new(v, 0.0)
                };
            }
            fft_nd(&mut buf, &self.fdims, false);
            *slot = Some(buf);
        }

        let alg = algebra(self.n);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut acc = vec![Complex64::new(0.0, 0.0); total];
        for k in 0..dim {
            acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            let mut any = false;
            for i in 0..=self.n {
                let bi = para_blade(i);
                let b = bi ^ k;
                let Some(fb) = &spectra[b] else { continue };
                any = true;
                let sign = alg.sign(bi, b);
                let kh = &self.kernel_hat[i];
                acc.par_iter_mut().zip(kh.par_iter().zip(fb.par_iter())).for_each(|(a, (x, y))| {
                    *a += x * y * sign;
                });
            }
            if !any {
                continue;
            }
            fft_nd(&mut acc, &self.fdims, true);
            for cell in 0..box_len {
                let pos = place(cell, &mut multi);
                let v = if twisted {
                    let (s, c) = self.twist_phase(&multi).sin_cos();
                    (acc[pos] * Complex64::new(c, -s)).re
                } else {
                    acc[pos].re
                };
                out[cell * dim + k] = v;
            }
        }
    }
}
