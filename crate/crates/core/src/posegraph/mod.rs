//! SE(3) algebra, keyframe graphs and Levenberg-Marquardt refinement.
//!
//! Poses are world-from-body transforms. A graph edge `(i, j, Z)` states that
//! `pose(i)⁻¹ · pose(j) ≈ Z`; optimisation holds the first vertex fixed and
//! updates every other vertex by left-multiplying a twist.

mod camera;
mod graph;
pub mod io;
mod lm;
mod se3;

pub use camera::{project_pinhole, CameraModel};
pub use graph::{Edge, Keyframe, PoseGraph};
pub use io::{PoseSample, Trajectory};
pub use lm::{
    apply_update, edge_error, linearize, lm_step, optimize, optimize_with, total_residual, Linearization, LmStep,
    OptimizeOptions, OptimizeReport,
};
pub use se3::SE3Transform;

/// `compose(a, b) = a · b`.
pub fn compose(a: &SE3Transform, b: &SE3Transform) -> SE3Transform {
    a.compose(b)
}

pub fn invert(a: &SE3Transform) -> SE3Transform {
    a.inverse()
}
