//! Numerical laboratory for eigenvector delocalization of non-Hermitian i.i.d.
//! random matrices.
//!
//! The crate is organised bottom-up: [`ensemble`] samples matrices, [`mde`] solves
//! the scalar Dyson equation, [`characteristics`] integrates the characteristic
//! flow, [`hermitization`] evaluates resolvents of the Hermitized matrix,
//! [`locallaw`] measures resolvent errors, [`flow`] couples the Ornstein-Uhlenbeck
//! matrix flow to a characteristic, [`deloc`] handles eigenvectors, and [`cli`]
//! runs configured experiments.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod cli;
pub mod deloc;
pub mod ensemble;
pub mod error;
pub mod flow;
pub mod hermitization;
pub mod linalg;
pub mod locallaw;
pub mod mde;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use faer::c64;
