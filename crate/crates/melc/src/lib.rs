//! Multithreshold entropy linear classifier.
//!
//! Finds a unit direction v maximizing the Cauchy-Schwarz divergence
//! between the kernel density estimates of the two projected classes,
//! then reads the classifier off the density crossings: a sorted set of
//! thresholds on the projection line with alternating region labels.
//!
//! Pipeline: load a [`data::Dataset`], optimize v, fit a
//! projection model, extract thresholds, evaluate.

pub mod classifier;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod gradient;
pub mod optimizer;
mod pairwise;
mod parallel;
pub mod synth;

pub use error::{MelcError, Result};
