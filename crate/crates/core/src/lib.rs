//! Numerical laboratory for equilibrium measures of rational maps of P¹ and
//! of holomorphic and monomial maps of P².
//!
//! The crate builds the equilibrium measure through pullbacks and backward
//! orbits, evaluates the Perron–Frobenius operator on exact fibers, and
//! measures decay of correlations and central-limit behaviour of Birkhoff
//! sums.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with the rest
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fibers;
mod grammar;
pub mod measure;
pub mod observables;
pub mod projective;
pub mod rng;
pub mod stats;
pub mod transfer;

pub use dynamics::{DegreeReport, DynMap, MapFamily};
pub use error::{EqdError, Result};
pub use measure::SampleSet;
pub use observables::Observable;
pub use projective::ProjPoint;
