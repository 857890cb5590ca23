//! Command-line front end: synthesize surveys, analyze recordings, build
//! training data, train the joint model and back-project subsurface targets.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{Overrides, PipelineConfig, Preset, RadiusSource, CONFIG_ENV};
pub use error::{exit, CliError, CliResult};
