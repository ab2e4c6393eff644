//! Physics-informed least squares on polynomial classes.
//!
//! The crate fits functions `h(x, t)` from a finite-dimensional polynomial
//! ball on `[0, 1] x [0, T]` to noisy samples, optionally penalising the
//! deviation `||D h - g||` from a linear differential equation. It provides
//! three estimators (plain, hard-constrained and soft-penalised), Monte Carlo
//! estimators of local Rademacher-type complexity parameters, evaluators for
//! the associated error bounds, and a seeded experiment harness.

pub mod bounds;
pub mod complexity;
pub mod diff_ops;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod penalty_mc;
pub mod poly_space;
pub mod rng;

pub use error::{PislabError, Result};
