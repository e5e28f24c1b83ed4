//! Streaming EMG gesture classification.
//!
//! Recordings are cut into overlapping windows, each window channel is
//! decomposed with a Haar wavelet, 17 statistics are taken per sub-band, a
//! small MLP turns the resulting vector into a class posterior, and the
//! posteriors of consecutive windows are fused into one decision.

pub mod classifier;
pub mod error;
pub mod features;
pub mod fusion;
pub mod par;
pub mod pipeline;
pub mod signal_io;
pub mod wavelet;

pub use error::{Error, Result};
