//! File formats, configuration and parallel evaluation for the `solstep`
//! activity-recognition pipeline. The numerical work lives in
//! `solstep_core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod modelfile;
pub mod parallel;
pub mod reports;

pub use error::{Error, Result};
pub use solstep_core as core;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
