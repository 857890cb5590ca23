//! Seeded synthetic slabs and brute-force reference implementations.
//!
//! The generator stands in for a field survey: a lawnmower path over a slab
//! with buried pipes, impacts at a fixed cadence, and an acoustic response
//! whose low band is absorbed over pipes and whose echo encodes depth.

pub mod io;
mod oracle;
mod scenario;
mod wave;

pub use oracle::{brute_force_backproject_oracle, naive_dft_oracle};
pub use scenario::{
    generate_scenario, label_point, GroundTruth, PipeSegment, Scenario, ScenarioConfig, TapTruth,
};
pub use wave::{generate_impact_wave, WaveConfig};
