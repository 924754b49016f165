//! Physics-based low-light video degradation.
//!
//! This crate synthesizes low-light degraded video from clean footage using a
//! nine-parameter degradation profile (exposure, anisotropic Gaussian blur,
//! and four camera-noise sources), recovers that profile from degraded
//! footage with classical statistics, and scores synthesis realism.
//!
//! The pipeline operates on linear intensity: encoded sRGB input is
//! linearized, darkened by `2^epsilon`, convolved with a multivariate
//! Gaussian point-spread function, corrupted by shot/read/quantization/
//! banding noise, and re-encoded. Every random draw is keyed by a
//! [`seed::SeedSpec`] sub-stream per (frame, noise source), so outputs are
//! bit-identical across runs and thread counts.

pub mod blur;
pub mod colorspace;
pub mod estimator;
pub mod metrics;
pub mod noise;
pub mod pattern;
pub mod profile;
pub mod seed;
pub mod synthesis;
pub mod video;

mod error;
mod parallel;

pub use error::{Error, Result};
pub use profile::DegradationProfile;
pub use seed::SeedSpec;
pub use video::{Colorspace, VideoTensor};
