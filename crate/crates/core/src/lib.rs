//! Hybrid classifier: a matrix-product-state feature extractor whose outputs
//! are angle-encoded onto qubits and compared, through a swap test, against a
//! state prepared by a trainable variational circuit.

pub mod circuit;
pub mod data;
pub mod encoding;
pub mod error;
pub mod mps;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
