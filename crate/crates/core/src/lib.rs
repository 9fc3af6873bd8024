//! Noncoherent massive-MIMO uplink detection under spatially-stationary
//! Weichselberger fading.
//!
//! The crate provides two maximum-likelihood receivers for codewords sent
//! through a block-fading channel that is unknown at both ends but whose
//! second-order statistics are known at the receiver:
//!
//! * [`detector_direct`] scores every hypothesis against the full
//!   `K·Nr × K·Nr` block-Toeplitz covariance (cubic in the array size);
//! * [`detector_spectral`] works on FFT coefficients of the observation and
//!   on per-frequency `K × K` cyclic spectral matrices (near-linear in the
//!   array size).
//!
//! [`channel`] and [`codebook`] build the fading statistics and alphabets,
//! [`divergence`] evaluates exact and asymptotic Kullback-Leibler divergences
//! between codeword hypotheses, and [`harness`] runs Monte Carlo error-rate
//! experiments and complexity benchmarks.

pub mod channel;
pub mod codebook;
pub mod detector_direct;
pub mod detector_spectral;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod observation;

pub use error::{Error, Result};
pub use observation::ReceivedBlock;
