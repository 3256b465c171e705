//! Dataset IO, judges, segmentation backends and the end-to-end pipeline
//! around `rvos-core`.

pub mod backend;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod imageio;
pub mod judge;
pub mod pipeline;

pub use error::{HarnessError, Result};
