//! Rate-distortion tools for the sawbridge process `X(t) = t - 1(t >= U)`.
//!
//! - [`process`]: sampling, autocorrelation and the sine-basis KLT.
//! - [`optimal`]: the exact entropy-distortion function, its convex envelope and
//!   the interval encoders achieving it.
//! - [`klt_coder`]: the dithered KLT coder and its analytic rate.
//! - [`transform`]: transform codes with fixed or trainable linear maps and a
//!   factorized entropy model.
//! - [`neural`]: MLP transform codes trained on the rate-distortion Lagrangian.
//! - [`harness`]: sweeps, curve comparison and CSV export.

pub mod error;
pub mod harness;
pub mod klt_coder;
pub mod montecarlo;
pub mod neural;
pub mod optimal;
pub mod process;
pub mod quadrature;
pub mod rng;
pub mod transform;

pub use error::{Error, Result};
