//! Particle filtering for jump-diffusion signal/observation systems whose
//! signal and observation share a Brownian driver and whose observation jumps
//! arrive with a signal-dependent intensity.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] – system parameterisation, hypothesis checks, the generator and
//!   the observation function `h`.
//! * [`levy`] – Poisson random measures, thinning and compensators.
//! * [`simulate`] – jump-adapted Euler–Maruyama paths of the joint system.
//! * [`girsanov`] – likelihood ratio along paths and reference drivers.
//! * [`filter`] – weighted-particle Zakai filter, normalisation, residuals of
//!   both filtering equations, innovations and the pathwise-uniqueness probe.
//! * [`mollify`] – Gaussian mollifier on measures and functions, L² norms.
//! * [`oracle`] – Kalman–Bucy and brute-force Monte Carlo ground truth.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); see [`exec`].

// `!(a < b)` range checks are written so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod filter;
pub mod girsanov;
pub mod io;
pub mod levy;
pub mod linalg;
pub mod model;
pub mod mollify;
pub mod oracle;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
pub use exec::Exec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
