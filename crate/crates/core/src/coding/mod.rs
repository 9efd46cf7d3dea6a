//! Generator matrices and the linear encoder.

mod generator;
mod store;

pub use generator::{rand_matrix, rand_matrix_minimal, rate, GeneratorMatrix, MAX_RESAMPLES};
pub use store::{encode, CodedShard, CodedStore, SampleLocation, StoreManifest};
