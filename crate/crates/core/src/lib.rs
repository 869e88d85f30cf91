//! Black-box membership inference audits for synthetic tabular data.
//!
//! The crate loads a population table, splits it into train, holdout and
//! reference partitions, runs a family of no-box attacks against a synthetic
//! release, combines their scores into ensembles and ranks everything across
//! many (dataset, generator, seed) states.

pub mod attacks;
pub mod dataset;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod learners;
pub mod metrics;
pub mod neighbors;
pub mod report;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
