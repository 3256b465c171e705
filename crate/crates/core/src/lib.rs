//! Allocation-only core for existence-aware referring video object segmentation.
//!
//! Everything here is pure computation over in-memory buffers: domain types
//! ([`model`]), frame sampling and clip planning ([`scheduler`]), key frame
//! compression ([`kfc`]), consensus gating policy ([`gate`]), multi-token mask
//! aggregation ([`assemble`]), the challenge metrics ([`metrics`]) and the
//! column-major run-length mask codec ([`rle`]).
//!
//! IO, networking, file formats and the command line live in the companion
//! `rvos-harness` crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

pub mod assemble;
pub mod error;
pub mod gate;
pub mod kfc;
pub mod metrics;
pub mod model;
pub mod rle;
pub mod scheduler;

pub use error::{Error, Result};
pub use model::{
    masklet_null, threshold, BinaryMask, FrameRef, FrameSource, Image, Masklet,
    ReferringExpression, SoftMask, VideoSequence, DEFAULT_TAU,
};
