//! Channel estimation for massive MIMO receivers with mixed-resolution RF
//! chains: half of the antennas feed full-resolution ADCs, the rest only
//! 1-bit converters.
//!
//! The estimator runs in two learned steps. A conditional GAN (U-Net
//! generator, patch discriminator) infers the full channel from the
//! full-resolution rows; a small two-layer LSTM then refines per-antenna
//! phase in the time domain using the 1-bit measurements. A 2-D Unitary
//! tensor-ESPRIT estimator serves as the parametric baseline.

pub mod cgan;
pub mod channel;
pub mod error;
pub mod esprit;
pub mod eval;
pub mod fft;
pub mod lstm;
pub mod nn;
pub mod preprocess;
pub mod rng;

pub use channel::{ArrayGeometry, ChannelKind, ChannelMatrix, DatasetSpec, MultipathComponent, MultipathParams, RowConvention};
pub use error::{Error, Result};
