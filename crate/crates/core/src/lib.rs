//! Semilinear wave probing in two dimensions.
//!
//! The crate models `u_tt - Δu + f(x, u) = r(t, x)` probed by a high-frequency
//! plane wave `χ(φ) e^{iφ/h}` (or its real part) with the linear phase
//! `φ = -t + x·ω`. It provides
//!
//! * [`model`]: grids, fields, envelopes, probes and nonlinearity laws,
//! * [`fdtd`]: an explicit finite-difference time-domain solver,
//! * [`cheb`]: Chebyshev/Fourier mode coefficients and the Abel pair,
//! * [`xray`]: the 2D X-ray transform and filtered backprojection,
//! * [`oracle`]: geometric-optics predictions of the exit wave,
//! * [`harmonics`]: harmonic extraction from exit traces,
//! * [`recon`]: the recovery pipelines built on top of all of the above.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is off.
//! The `parallel` feature parallelizes stencil rows and independent runs with
//! rayon.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
// `!(a > b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cheb;
mod error;
pub mod fdtd;
mod fft;
pub mod harmonics;
mod math;
pub mod model;
pub mod oracle;
pub mod recon;
pub mod xray;

pub use error::Error;
pub use num_complex::Complex64;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
