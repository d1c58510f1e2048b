//! Resource-state optimization and position-grid simulation for
//! measurement-induced multi-mode nonlinear gates.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cubic;
pub mod error;
pub mod fock;
pub mod gridsim;
pub mod nlsq;
pub mod optimizer;
pub mod quadpoly;

pub use error::{Error, Result};
