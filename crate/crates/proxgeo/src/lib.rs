//! Proximal forward-backward splitting over finite-rank subspaces of a
//! separable Hilbert space, and the generative equilibrium operator (GEO)
//! architecture built on top of it.
//!
//! The crate is organised around the pipeline it implements:
//!
//! - [`hilbert`]: finite-rank bases (standard Euclidean, Hermite-Gaussian),
//!   projection/lifting/encoding, Gauss-Hermite quadrature, and the
//!   first-derivative matrix used by the reaction-diffusion energy.
//! - [`prox`]: a catalog of convex functions with closed-form scaled proximal
//!   operators, the rank-R activation `sigma_f`, and a brute-force proximal
//!   oracle used to cross-check every closed form.
//! - [`splitting`]: exact, finite-difference, and projected finite-rank
//!   forward-backward splitting iterations with schedules and diagnostics.
//! - [`geo`]: the gated equilibrium operator itself, plus the constructor
//!   that reproduces the projected splitting iterate exactly.
//! - [`autodiff`]: reverse-mode differentiation over the GEO op set, Adam,
//!   and a finite-difference gradient checker.
//! - [`experiments`]: problem families, dataset generation, reference
//!   solvers, and end-to-end training runs.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod geo;
pub mod hilbert;
pub mod prox;
pub mod rng;
pub mod splitting;

pub use error::{Error, Result};
