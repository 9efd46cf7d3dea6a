//! Coded machine unlearning for sharded ridge-regression ensembles.
//!
//! Training data is split into `s` uncoded shards which a random binary
//! generator matrix `G` (s×r) combines into `r` coded shards. One ridge weak
//! learner is fit per coded shard and the master predicts with the mean of
//! their weights. Deleting a sample subtracts it from the coded shards it
//! appears in and retrains only those learners, which gives exactly the model
//! a from-scratch retrain on the surviving data would give.

pub mod bench;
pub mod coding;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod numerics;
pub mod projections;

pub use error::{Error, Result};
