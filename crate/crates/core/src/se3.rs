//! Rigid transforms and the 6-parameter (axis-angle, translation) chart used
//! by the pose solver.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;

use crate::cloud::{FeatureCloud, Point3};
use crate::error::{Error, Result};

/// Gravity direction in the world frame.
pub const GRAVITY: [f64; 3] = [0.0, 0.0, -1.0];

const TAYLOR_THRESHOLD: f64 = 1e-12;

/// An element of SE(3): `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality and handedness within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho > 1e-9 {
            return Err(Error::invalid(format!("rotation not orthonormal (err {ortho:.3e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("rotation determinant {det} != 1")));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite translation"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::from(t),
        }
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let axis = Unit::new_normalize(Vector3::from(axis));
        Self {
            rotation: *Rotation3::from_axis_angle(&axis, angle).matrix(),
            translation: Vector3::from(translation),
        }
    }

    /// Uniformly distributed rotation (Shoemake's quaternion method), zero translation.
    pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let q = nalgebra::Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
        let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Self {
            rotation: *rot.matrix(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply_point(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)] * p[0] + r[(0, 1)] * p[1] + r[(0, 2)] * p[2] + t[0],
            r[(1, 0)] * p[0] + r[(1, 1)] * p[1] + r[(1, 2)] * p[2] + t[1],
            r[(2, 0)] * p[0] + r[(2, 1)] * p[1] + r[(2, 2)] * p[2] + t[2],
        ]
    }

    #[inline]
    pub fn apply_vector(&self, v: &Point3) -> Point3 {
        let r = &self.rotation;
        [
            r[(0, 0)] * v[0] + r[(0, 1)] * v[1] + r[(0, 2)] * v[2],
            r[(1, 0)] * v[0] + r[(1, 1)] * v[1] + r[(1, 2)] * v[2],
            r[(2, 0)] * v[0] + r[(2, 1)] * v[1] + r[(2, 2)] * v[2],
        ]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle of `self⁻¹ ∘ other` in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation[0], self.translation[1], self.translation[2]]
    }
}

/// Maps every point of a cloud through `t`; all other columns are untouched.
pub fn se3_apply(t: &RigidTransform, cloud: &FeatureCloud) -> FeatureCloud {
    let pts = cloud.points().iter().map(|p| t.apply_point(p)).collect();
    cloud
        .with_points(pts)
        .expect("rigid motion of finite points stays finite")
}

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

/// Wraps an axis-angle vector so that its norm is at most π.
pub fn wrap_axis_angle(w: Vector3<f64>) -> Vector3<f64> {
    let theta = w.norm();
    if theta <= std::f64::consts::PI {
        return w;
    }
    let wrapped = (theta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    w * (wrapped / theta)
}

/// Exponential map: `p = (ω, v)` with ω the axis-angle rotation and v the translation.
pub fn se3_from_params(p: &[f64; 6]) -> RigidTransform {
    let w = wrap_axis_angle(Vector3::new(p[0], p[1], p[2]));
    let theta = w.norm();
    let k = hat(&w);
    let (a, b) = if theta < TAYLOR_THRESHOLD {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let rotation = Matrix3::identity() + k * a + k * k * b;
    RigidTransform {
        rotation,
        translation: Vector3::new(p[3], p[4], p[5]),
    }
}

/// Logarithm map, inverse of [`se3_from_params`] with ‖ω‖ ≤ π.
pub fn se3_to_params(t: &RigidTransform) -> [f64; 6] {
    let r = &t.rotation;
    let vee = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = vee.norm() / 2.0;
    let theta = sin.atan2(cos);
    let w = if theta < 1e-6 {
        // θ/sinθ ≈ 1 + θ²/6
        vee * (0.5 * (1.0 + theta * theta / 6.0))
    } else if cos > 0.0 {
        vee * (theta / (2.0 * sin))
    } else {
        // Near π the antisymmetric part vanishes; recover the axis from the
        // symmetric part (1 - cosθ) a aᵀ.
        let s = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
        let (mut col, mut best) = (0, s[(0, 0)]);
        for i in 1..3 {
            if s[(i, i)] > best {
                best = s[(i, i)];
                col = i;
            }
        }
        let mut axis = s.column(col).into_owned();
        axis /= axis.norm();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        axis * theta
    };
    let v = t.translation;
    [w[0], w[1], w[2], v[0], v[1], v[2]]
}
