//! Image files, benchmarks and the `symfilt` command-line tool on top of
//! [`symfilt_core`].

pub mod bench;
mod error;
pub mod model;
pub mod parallel;
pub mod pgm;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
