//! Numerical laboratory for energy conservation criteria of rough solutions
//! to the inhomogeneous incompressible and the compressible isentropic Euler
//! equations on periodic domains.
//!
//! The crate builds without `std` (it needs `alloc`); disable the default
//! `std` feature to use it in that setting.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style guards are how NaN gets rejected; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod besov;
pub mod commutators;
pub mod defect;
pub mod error;
pub mod fieldsgen;
pub mod fit;
pub mod grid;
pub mod models;
pub mod mollify;
pub mod testfn;

pub use error::{Error, Result};
pub use fit::RateFit;
pub use grid::{Field, Grid, Over, Shift};
pub use models::{Closure, PressureLaw};
pub use mollify::Axes;
pub use testfn::TestFunction;
