//! Counterfactual trust scoring for reward classifiers.
//!
//! The pipeline batches a labeled record stream in time, injects controlled
//! bias into later batches, trains a boosted-tree reward classifier and two
//! autoencoder drift detectors on the clean prefix, and scores every batch
//! with a composite trust value built from drift, uncertainty, fairness
//! violations, error and counterfactual consistency.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod config;
pub mod drift;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod reward;
pub mod rng;
pub mod synth;
pub mod trust;

pub use error::{Error, Result};
