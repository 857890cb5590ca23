//! Pose-synchronised FD maps and back-projection localisation.
//!
//! Each SOI is tied to the robot pose at its onset and projected to a tap
//! point on the inspection surface. Tap points become an FD map, and the echo
//! radius of each tap location is swept as a half-sphere shell through a
//! voxel grid below the surface; shells intersect at reflectors.

mod export;
mod fdmap;
mod sync;
mod voxel;

pub use export::{write_fd_map_csv, write_fd_map_ply, write_targets_csv, write_voxel_ply, VoxelMetadata};
pub use fdmap::{estimate_radius, peak_frequency, radius_bin_tolerance, register_fd_map, FdMapPoint, PeakBand};
pub use sync::{sync_measurements, Measurement, SurfacePlane, SyncConfig, SyncOutput, TapGroup};
pub use voxel::{
    back_project, extract_targets, shell_weight, BackProjectConfig, ShellScoring, Target, VoxelGrid,
};
