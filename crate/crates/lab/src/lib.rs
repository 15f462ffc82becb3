//! Batch front-end for the `onsagerlab-core` diagnostics: run configurations,
//! fixture generation, field files, resumable sweeps and CSV reports.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod report;
pub mod runner;

pub use config::{Plan, RunConfig};
pub use error::{LabError, Result};
pub use runner::{run, RunSummary};
