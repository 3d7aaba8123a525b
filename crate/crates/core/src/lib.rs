//! Core library for the satcalc pipeline.
//!
//! The crate is organized bottom-up: [`grid`] and [`satc`] provide the raster
//! containers and the on-disk tensor format; [`indices`] and [`ecovars`] hold
//! the closed-form spectral and ecological formulas; [`dataset`] builds
//! training corpora from band stacks and height rasters; [`model`] implements
//! the frozen-backbone multi-task network; [`train`] owns the optimization
//! loop and its schedules; [`metrics`] computes the evaluation suite.
//!
//! Everything is deterministic: all randomness flows from caller-supplied
//! seeds through counter-based mixing, and all reductions run in a fixed
//! order, so identical invocations produce byte-identical outputs.

pub mod dataset;
pub mod ecovars;
pub mod error;
pub mod grid;
pub mod indices;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod satc;
pub mod train;

pub use error::{CoreError, Result};
