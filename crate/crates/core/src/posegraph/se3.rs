use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Rigid transform `[R t; 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SE3Transform {
    fn default() -> Self {
        Self::identity()
    }
}

fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let r = Rotation3::from_matrix_eps(m, 1e-15, 50, Rotation3::from_matrix_unchecked(*m));
    *r.matrix()
}

impl SE3Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor; the rotation must be orthonormal with det +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self { rotation, translation };
        if !t.is_valid(1e-9) {
            return Err(Error::InvalidInput("rotation is not orthonormal with det +1".into()));
        }
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// From a quaternion `(w, x, y, z)`, normalized on the way in.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Result<Self> {
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if !(q.norm() > 1e-12) || !q.norm().is_finite() {
            return Err(Error::InvalidInput("quaternion has zero or non-finite norm".into()));
        }
        let q = UnitQuaternion::from_quaternion(q);
        Ok(Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        })
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        Self::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`, i.e. the homogeneous product `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: orthonormalize(&(self.rotation * other.rotation)),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho <= tol
            && (r.determinant() - 1.0).abs() <= tol
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Exponential map of a twist `(ρ, ω)`: translation part first.
    pub fn exp(twist: &Vector6<f64>) -> Self {
        let rho = Vector3::new(twist[0], twist[1], twist[2]);
        let omega = Vector3::new(twist[3], twist[4], twist[5]);
        let theta = omega.norm();
        let w = hat(&omega);
        let w2 = w * w;
        let (a, b, c) = if theta < 1e-6 {
            let t2 = theta * theta;
            (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            (
                theta.sin() / theta,
                (1.0 - theta.cos()) / (theta * theta),
                (theta - theta.sin()) / (theta * theta * theta),
            )
        };
        let rotation = Matrix3::identity() + w * a + w2 * b;
        let v = Matrix3::identity() + w * b + w2 * c;
        Self {
            rotation: orthonormalize(&rotation),
            translation: v * rho,
        }
    }

    /// Logarithm map, inverse of [`SE3Transform::exp`].
    pub fn log(&self) -> Vector6<f64> {
        let r = &self.rotation;
        let vee = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
        let s = vee.norm();
        let c = (r.trace() - 1.0) / 2.0;
        let omega = if c < 0.0 {
            // Near pi the antisymmetric part loses precision.
            Rotation3::from_matrix_unchecked(*r).scaled_axis()
        } else if s < 1e-9 {
            vee * (1.0 + s * s / 6.0)
        } else {
            vee * (s.atan2(c) / s)
        };
        let theta = omega.norm();
        let w = hat(&omega);
        let coeff = if theta < 1e-6 {
            1.0 / 12.0 + theta * theta / 720.0
        } else {
            (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
        let rho = v_inv * self.translation;
        Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z)
    }

    /// Interpolates with a linear translation and a rotation slerp.
    pub fn interpolate(&self, other: &Self, s: f64) -> Self {
        let q = self.quaternion().slerp(&other.quaternion(), s);
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: self.translation + (other.translation - self.translation) * s,
        }
    }
}
