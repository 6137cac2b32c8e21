//! Density-matrix simulation of a feedback-driven quantum reservoir computer
//! read out through weak measurements, together with the benchmark tasks,
//! ridge readout and analysis tools used to study it.

pub mod analysis;
pub mod channels;
pub mod error;
pub mod learn;
pub mod qmath;
pub mod reservoir;
pub mod seeds;
pub mod stats;
pub mod tasks;

pub use error::{QrcError, Result};
