//! Reduced-order linear latent models of AC current waveforms, with early
//! arc-fault alarming.
//!
//! The pipeline: embed a scalar current measurement into delay windows,
//! project onto the dominant subspace, apply a polynomial coordinate change
//! fitted so the latent state evolves linearly, confine the operator's
//! spectrum to the unit circle for stable long rollouts, predict the
//! waveform forward, and flag sustained, growing prediction errors against
//! thresholds calibrated on healthy data.

pub mod config;
pub mod detection;
pub mod embedding;
pub mod error;
pub mod latent;
pub mod lifting;
pub mod spectral;
pub mod waveform;

pub use error::{Error, Result};
