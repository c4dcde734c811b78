//! Clifford-valued Dirac, Cauchy and Π-operators on conformally flat geometries,
//! with verification suites and a Beltrami fixed-point solver.

pub mod beltrami;
pub mod clifford;
pub mod fd;
pub mod fft;
pub mod geometry;
pub mod fields;
pub mod kernels;
pub mod operators;
pub mod spectral;
pub mod suites;
