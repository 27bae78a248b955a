use std::f64::consts::PI;

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rigid transform: rotation `q` followed by translation `t`.
///
/// Quaternions are kept with a non-negative scalar part so equal rotations
/// compare and serialize identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub t: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            t: Vector3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn new(t: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Self { t, q: canonical(q) }
    }

    /// Planar pose: position `(x, y, z)` and heading `yaw` about +z.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(
            Vector3::new(x, y, z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        )
    }

    /// Builds a pose from `[x, y, z, qw, qx, qy, qz]`; the quaternion is normalized.
    pub fn from_array(a: [f64; 7]) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(a[3], a[4], a[5], a[6]));
        Self::new(Vector3::new(a[0], a[1], a[2]), q)
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.t.x, self.t.y, self.t.z, self.q.w, self.q.i, self.q.j, self.q.k,
        ]
    }

    /// `self ⊕ other`: applies `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3::new(self.t + self.q * other.t, self.q * other.q)
    }

    pub fn inverse(&self) -> Pose3 {
        let qi = self.q.inverse();
        Pose3::new(-(qi * self.t), qi)
    }

    /// Pose of `other` relative to `self`: `self⁻¹ ⊕ other`.
    pub fn between(&self, other: &Pose3) -> Pose3 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q * p + self.t
    }

    /// Heading of the body x-axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        let x = self.q * Vector3::x();
        x.y.atan2(x.x)
    }

    pub fn rotation_angle(&self) -> f64 {
        self.q.angle()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = self.q.to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl Serialize for Pose3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 7]>::deserialize(d)?;
        Ok(Pose3::from_array(a))
    }
}
