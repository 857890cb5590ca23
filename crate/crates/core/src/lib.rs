//! Impact-sounding acoustic inspection toolkit.
//!
//! The crate is organised along the inspection pipeline:
//!
//! - [`signal`]: conditioning of raw microphone traces, signal-of-interest
//!   extraction, spectra, Frequency Density and mel segmentation.
//! - [`posegraph`]: SE(3) algebra, keyframe graphs and Levenberg-Marquardt
//!   refinement of the robot trajectory.
//! - [`inference`]: the shared-encoder network that predicts pipe presence
//!   and pipe depth from a mel segment.
//! - [`imaging`]: pose/acoustic synchronisation, FD maps and semi-hemisphere
//!   back-projection onto a voxel grid.
//! - [`synth`]: seeded synthetic slabs, impact waves and brute-force oracles.

pub mod error;
pub mod imaging;
pub mod inference;
pub mod posegraph;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
