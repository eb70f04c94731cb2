//! Continuous-time quantum walks on networks under the postselected
//! (nonlinear) Lindblad master equation.
//!
//! Modules:
//! - [`graph`]: network families and the Laplacian Hamiltonian.
//! - [`master_eq`]: generators for Haken–Strobl and quantum-stochastic-walk
//!   decoherence, fixed-step RK4 evolution and steady-state search.
//! - [`steady`]: analytic steady-state conditions used as checks.
//! - [`observables`]: coherence, trace distance, stretched-exponential fits.
//! - [`spin`]: single-excitation XY spin networks and pairwise concurrence.
//! - [`cli`]: batch runs driven by TOML/JSON configuration files.

// `!(x > 0.0)` is used throughout so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod master_eq;
pub mod observables;
pub mod spin;
pub mod steady;

pub use error::{Error, Result};

/// Engine version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
