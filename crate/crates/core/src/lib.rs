//! Semi-discrete second-order Riesz transforms on products of cyclic lattices
//! and flat tori.
//!
//! The crate is organised bottom-up:
//!
//! - [`group_lattice`]: the product group, sampled functions, measures and norms.
//! - [`spectral_ops`]: exact Fourier-side Laplacian, heat semigroup and the
//!   multipliers `R_α²`.
//! - [`constants`]: the sharp constants and special functions the estimates use.
//! - [`norm_probe`]: lower bounds for operator norms and inequality checks.
//! - [`martingale_mc`]: the jump/diffusion walk and its martingale transforms.
//! - [`zigzag_laminate`]: zigzag martingale trees, laminates and weak-type
//!   certificates.
//! - [`fd_transfer`]: finite-difference Riesz transforms on `hZ^N`.

pub mod constants;
pub mod error;
pub mod fd_transfer;
pub mod group_lattice;
pub mod martingale_mc;
pub mod norm_probe;
pub mod seed;
pub mod spectral_ops;
pub mod zigzag_laminate;

mod fft;
mod linalg;

pub use error::{Error, Result};
pub use group_lattice::{Domain, GroupSpec, LatticeFunction};
pub use spectral_ops::{FrequencyIndex, RieszCoefficients};

pub type C64 = num_complex::Complex64;
