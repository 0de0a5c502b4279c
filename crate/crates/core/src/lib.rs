//! Invoice late-payment prediction and collections prioritization.
//!
//! The crate covers the full pipeline: a synthetic receivables generator,
//! windowed customer-history features, chronological splits, a suite of
//! from-scratch classifiers, evaluation experiments, risk-weighted customer
//! ranking and a paired Monte-Carlo simulation of collector calls.

pub mod cli;
pub mod datagen;
pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod ranking;
pub mod report;
pub mod simulate;
pub mod splits;
pub mod stats;

pub use error::{Error, Result};
