//! Learned geometric constellation shaping with dummy-bit rate adaptation.
//!
//! The crate is organised bottom-up:
//!
//! - [`constellation`]: bit-labelled constellations, uniform QAM baselines,
//!   power moments and many-to-one cluster detection.
//! - [`channel`]: the multi-span effective-SNR model (ASE plus a
//!   modulation-dependent nonlinear interference term) and the AWGN sampler.
//! - [`demapper`]: Gaussian bit-metric LLRs and per-bit GMI estimation,
//!   by Monte Carlo and by quadrature.
//! - [`training`]: the end-to-end trainer (mapper table, Gaussian or MLP
//!   demapper, hand-written reverse pass, Adam, finite-difference checks).
//! - [`rate_adapt`]: dummy-bit selection, net-rate bookkeeping and label
//!   stream assembly.
//! - [`reach`]: run configuration, distance sweeps, reach lookup and LUT
//!   export.
//! - [`cli`]: the `shapegain` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod constellation;
pub mod demapper;
mod error;
pub mod rate_adapt;
pub mod reach;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use num_complex::Complex64;
