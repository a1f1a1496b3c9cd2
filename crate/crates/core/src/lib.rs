//! Generalized Tikhonov regularization for nonlinear ill-posed problems at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`index`]: index functions and the derived misfit/rate calculus (`f`, `H`, `G`).
//! - [`problem`]: finite-dimensional problem instances, penalties, Bregman distances,
//!   noise and level sets.
//! - [`solver`]: minimization of the Tikhonov functional.
//! - [`source`]: distance functions for approximate source conditions and the
//!   variational-inequality checks built on them.
//! - [`harness`]: parameter choice, noise-level sweeps, rate fitting and reports.

// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod index;
pub mod numeric;
pub mod problem;
pub mod solver;
pub mod source;

pub use error::{Error, Result};
pub use index::{build_calculus, build_calculus_with, CalculusOptions, CalculusTriple, IndexFunction};
pub use problem::{ForwardOperator, Penalty, ProblemInstance, VectorSpaceConfig};
pub use solver::{minimize, RegularizedSolution, SolverConfig};
