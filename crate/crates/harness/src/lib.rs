//! Experiment harness: configuration, data, orchestration, persistence,
//! plotting and the command-line front end.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod plot;
pub mod verify;

pub use error::{HarnessError, Result};
