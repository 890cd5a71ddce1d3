//! Monte-Carlo solvers for nonlinear integral equations of the second kind.
//!
//! Fredholm equations `x(t) = f(t) + ∫ K(t, s, x(s)) dμ(s)` and Volterra
//! equations on `[0, 1] × T` are solved by a staged dependent-trials
//! recursion: each Picard stage gets its own block of random draws, and the
//! previous stage is tabulated only where the next one needs it. The
//! [`inference`] module turns the resulting estimates into uniform confidence
//! bands through the Gaussian limit of the normalized error.

pub mod cases;
pub mod deterministic;
pub mod error;
pub mod fredholm;
pub mod grid;
pub mod inference;
pub mod measure;
pub mod partition;
pub mod problem;
pub mod rng;
pub mod summation;
pub mod tau;
pub mod volterra;

pub use error::{Error, Result};
