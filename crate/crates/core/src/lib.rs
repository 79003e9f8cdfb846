//! Multi-glimpse LSTM human detection on registered RGB-D frames.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`proposals`] scans a depth map for plausible head-top pixels.
//! 2. [`glimpse`] builds a large-to-small set of square windows around each
//!    proposal, and [`features`] turns every clipped window into a fixed-length
//!    vector for both the color and the depth stream.
//! 3. [`nnet`] classifies the glimpse sequence with either a single LSTM chain
//!    over concatenated color-depth features or a three-chain fusion network,
//!    trained by [`training`] with backpropagation through time.
//! 4. [`eval`] matches scored proposals against ground truth and reports
//!    FPPI versus miss-rate curves.
//!
//! [`synth`] renders deterministic synthetic scenes with ground truth so the
//! whole chain can be exercised without a capture device, and [`pipeline`]
//! glues the stages together over the on-disk formats.
//!
//! Batch-level entry points take an [`Exec`] so the same code runs either on
//! the rayon pool (feature `parallel`, on by default) or sequentially. Results
//! are bitwise identical in both modes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod glimpse;
pub mod imaging;
pub mod nnet;
pub mod par;
pub mod pipeline;
pub mod proposals;
pub mod rng;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use par::Exec;
