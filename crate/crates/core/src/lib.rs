//! Near-field multi-user MIMO uplink: spherical-wave ULA channels, 2D-MUSIC
//! localization, localization-based zero-forcing beam focusing and the
//! Monte-Carlo harness that drives the experiments.

pub mod analysis;
pub mod beamfocus;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod music;
pub mod signaling;

pub use error::{Error, Result};
pub use geometry::{CarrierConfig, PolarLocation, SteeringVector, UlaGeometry};
pub use num_complex::Complex64;
