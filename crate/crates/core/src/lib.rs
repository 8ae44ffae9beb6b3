//! Numerical core for two-scale melting of a periodic ice/water medium.
//!
//! Everything here is `no_std` with `alloc`; file formats, the command line
//! and thread pools live in the companion `msstefan` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod annulus;
pub mod cell;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod macro_solver;
pub mod micro_reduced;
pub mod micro_sap;
pub mod thermo;
pub mod verify;

pub use error::{Error, Result};
