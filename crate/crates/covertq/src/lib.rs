//! File formats, parallel estimation, scaling experiments and the `covertq`
//! command line, on top of `covertq-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod parallel;
pub mod stats;
pub mod trace;

pub use error::{AppError, AppResult};
