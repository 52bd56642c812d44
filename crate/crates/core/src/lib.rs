//! Unconditional quantile partial effects (UQPE) estimated from a linear
//! quantile regression process.
//!
//! The pipeline fits `beta(eta)` on a grid of levels, matches each
//! observation's fitted conditional quantile curve to the unconditional
//! `tau`-quantile of the outcome, and smooths the matched slopes on the
//! outcome at that quantile. RIF-regression baselines, a pairwise bootstrap
//! and a Monte Carlo harness are included.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod dist;
pub mod error;
pub mod inference;
pub mod matching;
pub mod output;
pub mod process;
pub mod qr;
pub mod rif;
pub mod rng;
pub mod simulation;
pub mod smoothing;
pub mod uqpe;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use uqpe::{estimate_uqpe, Method, UqpeEstimate};
