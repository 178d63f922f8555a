//! Semi-parametric image synthesis from semantic layouts.
//!
//! A memory bank of image segments is built from (image, layout) pairs. For a
//! novel layout, every connected region retrieves the most compatible bank
//! segment by mask and context IoU, the segment is aligned with an affine
//! fit, and the aligned segments are composited back-to-front onto a canvas
//! whose boundaries are elided. A pluggable finisher turns the canvas into the
//! final image. The crate also produces simulated training canvases and the
//! evaluation statistics used to compare synthesized and real images.

pub mod alignment;
pub mod bank;
pub mod canvas_sim;
pub mod cli;
pub mod compositor;
pub mod config;
pub mod error;
pub mod eval;
pub mod finisher;
pub mod grid;
pub mod io;
pub mod layout;
pub mod pipeline;
pub mod retrieval;
pub mod toy;

pub use error::{Error, Result};
