//! Link-level simulator for a three-band OFDM system with semi-blind
//! channel estimation in an orthogonal wavelet basis.
//!
//! The pieces, bottom up:
//!
//! * [`rng`] — counter-derived random streams so every (point, frame)
//!   draws independently of scheduling;
//! * [`linalg`] — dense complex matrices and a Cholesky solver;
//! * [`transforms`] — periodized orthogonal wavelet bases and the
//!   truncated-Fourier synthesis operator mapping coefficients to the
//!   stacked frequency response;
//! * [`phy`] — convolutional code, interleaver, QPSK mapping, frame
//!   geometry, and the observation model;
//! * [`channels`] — channel generators (sparse-in-basis, exponential
//!   power-delay profile, taps from file);
//! * [`siso`] — soft demapper and max-a-posteriori trellis decoder;
//! * [`estimators`] — pilot-based baselines and the iterative
//!   coefficient-domain estimators, including the sparsity-prior variant
//!   that prunes its parameter set as it converges;
//! * [`harness`] — seeded Monte Carlo sweeps with CSV output;
//! * [`selftest`] — slow independent oracles backing the fast paths.

pub mod channels;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod phy;
pub mod rng;
pub mod selftest;
pub mod siso;
pub mod transforms;

pub use error::{Error, Result};
