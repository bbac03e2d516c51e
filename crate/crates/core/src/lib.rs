//! Multichannel beamforming laboratory.
//!
//! Simulates reverberant noisy scenes with an image-source room model,
//! estimates relative transfer functions by noise whitening and
//! eigendecomposition, designs MVDR/MPDR beamformers, applies two-stage
//! (time-invariant beamformer + time-varying mask) weights, and analyzes
//! the resulting spatial response and enhancement quality.

pub mod beamformer;
pub mod beampattern;
pub mod covariance;
pub mod error;
pub mod metrics;
pub mod mixer;
pub mod pipeline;
pub mod postfilter;
pub mod room;
pub mod signal;
pub mod stft;
pub mod weights_io;

pub use error::{Error, Result};
pub use signal::TimeSignal;
