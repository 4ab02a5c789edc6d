#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod detect;
pub mod dists;
pub mod error;
pub mod quad;
pub mod rng;
pub mod simqueue;
mod special;

pub use dists::ServiceDist;
pub use error::{Error, Result};
