use nalgebra::{Matrix3, Vector3, Vector4};

use super::SE3Transform;
use crate::error::{Error, Result};

/// Pinhole camera: intrinsic matrix plus world-to-camera extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    extrinsics: SE3Transform,
}

impl CameraModel {
    pub fn new(intrinsics: Matrix3<f64>, extrinsics: SE3Transform) -> Result<Self> {
        let k = &intrinsics;
        let lower = [k[(1, 0)], k[(2, 0)], k[(2, 1)]];
        if lower.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter("intrinsic matrix must be upper triangular".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        if k.iter().any(|v| !v.is_finite()) || k[(2, 2)] == 0.0 {
            return Err(Error::InvalidParameter("intrinsic matrix must be finite with K[2][2] != 0".into()));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
        })
    }

    /// Zero-skew camera at the world origin.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(
            Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0),
            SE3Transform::identity(),
        )
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &SE3Transform {
        &self.extrinsics
    }
}

/// Projects a homogeneous world point to pixel coordinates.
pub fn project_pinhole(camera: &CameraModel, point: &Vector4<f64>) -> Result<(f64, f64)> {
    if point.w == 0.0 || point.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("point must be finite with nonzero w".into()));
    }
    let p = Vector3::new(point.x, point.y, point.z) / point.w;
    let pc = camera.extrinsics.transform_point(&p);
    if !(pc.z > 0.0) {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    let uvw = camera.intrinsics * pc;
    Ok((uvw.x / uvw.z, uvw.y / uvw.z))
}
