//! Patch-based symmetric smoothing filters.
//!
//! This crate holds the numerical core: image buffers and fidelity metrics,
//! periodic patch operators, kernel affinity matrices, Sinkhorn-Knopp
//! balancing, a fixed-covariance Gaussian mixture learned by EM, and the
//! GMM symmetric smoothing filter (GSF) built on top of it.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! benchmark harness and the command-line front end live in the `symfilt`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod affinity;
pub mod balancing;
pub mod dense;
mod error;
pub mod gmm;
pub mod gsf;
pub mod image;
pub mod patch;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
