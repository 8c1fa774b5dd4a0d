//! Link-level simulation of coded OFDM under impulsive noise.
//!
//! The receiver front end runs a small feed-forward network over three
//! per-sample features (magnitude, rank-ordered absolute differences and
//! median deviation) to flag impulse-corrupted samples, which are then
//! blanked before demodulation. Threshold-based blanking and clipping are
//! provided as baselines, and the [`harness`] module runs paired Monte Carlo
//! BER sweeps over all of them.

pub mod coding;
pub mod dnn;
mod error;
pub mod features;
pub mod harness;
pub mod mitigation;
pub mod noise;
pub mod ofdm;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
