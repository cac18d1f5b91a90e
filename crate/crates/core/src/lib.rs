//! Decentralized consensus and optimization over time-varying directed graphs
//! with sparsified, push-sum style communication.

pub mod baselines;
pub mod compression;
pub mod consensus;
pub mod eigen;
pub mod error;
pub mod metrics;
pub mod mixing;
pub mod optimize;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
