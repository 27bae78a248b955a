use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::pose::{wrap_angle, Pose3};
use crate::error::{Error, Result};

/// Planes closer than this to the origin have no usable closest-point form.
pub const CP_EPSILON: f64 = 1e-6;

/// Unit normals are accepted within this distance of norm one.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// `|n_z|` at or above this marks a horizontal surface (floor or ceiling).
pub const VERTICAL_LIMIT: f64 = 0.707;

/// Infinite plane `n·p + d = 0` with unit normal and signed offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub n: Vector3<f64>,
    pub d: f64,
}

impl Plane {
    pub fn new(n: Vector3<f64>, d: f64) -> Result<Self> {
        let norm = n.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE || !d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "plane normal must be unit length (got norm {norm})"
            )));
        }
        Ok(Self { n, d })
    }

    /// Normalizes `n` and scales `d` accordingly.
    pub fn from_unnormalized(n: Vector3<f64>, d: f64) -> Result<Self> {
        let norm = n.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("zero plane normal".into()));
        }
        Ok(Self {
            n: n / norm,
            d: d / norm,
        })
    }

    pub fn from_point_normal(point: &Vector3<f64>, n: Vector3<f64>) -> Result<Self> {
        Self::new(n, -n.dot(point))
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.n.dot(p) + self.d
    }

    /// Same geometric plane with the opposite orientation.
    pub fn flipped(&self) -> Plane {
        Plane {
            n: -self.n,
            d: -self.d,
        }
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.n * self.signed_distance(p)
    }

    /// Closest point of the plane to the origin, `Π = −d·n`.
    pub fn to_cp(&self) -> Result<CpVector> {
        if self.d.abs() <= CP_EPSILON {
            return Err(Error::DegeneratePlane(self.d));
        }
        Ok(CpVector { pi: -self.d * self.n })
    }

    /// Whether the closest-point form loses this plane's orientation
    /// (the origin lies on the positive side).
    pub fn cp_side_flipped(&self) -> bool {
        self.d > 0.0
    }

    pub fn to_minimal(&self) -> PlaneMinimal {
        let horizontal = self.n.x.hypot(self.n.y);
        let phi = if horizontal < 1e-12 {
            0.0
        } else {
            wrap_angle(self.n.y.atan2(self.n.x))
        };
        PlaneMinimal {
            phi,
            theta: self.n.z.clamp(-1.0, 1.0).asin(),
            d: self.d,
        }
    }

    pub fn class(&self) -> WallClass {
        classify_wall(self)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.n.x, self.n.y, self.n.z, self.d]
    }
}

impl Serialize for Plane {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Plane {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        Plane::from_unnormalized(Vector3::new(a[0], a[1], a[2]), a[3])
            .map_err(serde::de::Error::custom)
    }
}

/// Closest-point plane encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpVector {
    pub pi: Vector3<f64>,
}

impl CpVector {
    /// Recovers the plane with `n = Π/‖Π‖` and `d = −‖Π‖`, i.e. the
    /// orientation for which the origin is on the negative side.
    pub fn to_plane(&self) -> Result<Plane> {
        let norm = self.pi.norm();
        if norm <= CP_EPSILON {
            return Err(Error::DegeneratePlane(norm));
        }
        Ok(Plane {
            n: self.pi / norm,
            d: -norm,
        })
    }

    /// Recovers the plane and restores the orientation recorded by
    /// [`Plane::cp_side_flipped`].
    pub fn to_plane_with_side(&self, flipped: bool) -> Result<Plane> {
        let p = self.to_plane()?;
        Ok(if flipped { p.flipped() } else { p })
    }
}

/// Azimuth / elevation / offset form used for matching and optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneMinimal {
    pub phi: f64,
    pub theta: f64,
    pub d: f64,
}

impl PlaneMinimal {
    pub fn normal(&self) -> Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        Vector3::new(ct * cp, ct * sp, st)
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            n: self.normal(),
            d: self.d,
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.phi, self.theta, self.d)
    }

    /// Component-wise difference with wrapped angles.
    pub fn difference(&self, other: &PlaneMinimal) -> Vector3<f64> {
        Vector3::new(
            wrap_angle(self.phi - other.phi),
            wrap_angle(self.theta - other.theta),
            self.d - other.d,
        )
    }
}

/// Squared Mahalanobis distance gate for plane matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisGate {
    pub info: Matrix3<f64>,
    pub threshold: f64,
}

impl MahalanobisGate {
    pub fn new(info: Matrix3<f64>, threshold: f64) -> Result<Self> {
        let gate = Self { info, threshold };
        gate.validate()?;
        Ok(gate)
    }

    pub fn diagonal(phi: f64, theta: f64, d: f64, threshold: f64) -> Result<Self> {
        Self::new(Matrix3::from_diagonal(&Vector3::new(phi, theta, d)), threshold)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidParameter(
                "gate threshold must be positive".into(),
            ));
        }
        if (self.info - self.info.transpose()).abs().max() > 1e-12
            || self.info.cholesky().is_none()
        {
            return Err(Error::InvalidParameter(
                "gate information matrix must be symmetric positive-definite".into(),
            ));
        }
        Ok(())
    }

    pub fn accepts(&self, error: f64) -> bool {
        error < self.threshold
    }
}

impl Default for MahalanobisGate {
    /// χ² 95% quantile for 3 dof, σ = (0.2 rad, 0.2 rad, 0.1 m).
    fn default() -> Self {
        Self {
            info: Matrix3::from_diagonal(&Vector3::new(25.0, 25.0, 100.0)),
            threshold: 7.81,
        }
    }
}

/// Squared Mahalanobis distance between two planes in minimal form.
pub fn plane_error(obs: &PlaneMinimal, map: &PlaneMinimal, gate: &MahalanobisGate) -> f64 {
    let delta = obs.difference(map);
    (delta.transpose() * gate.info * delta)[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WallClass {
    XVertical,
    YVertical,
    NonWall,
}

pub fn classify_wall(p: &Plane) -> WallClass {
    if p.n.z.abs() >= VERTICAL_LIMIT {
        WallClass::NonWall
    } else if p.n.x.abs() >= p.n.y.abs() {
        WallClass::XVertical
    } else {
        WallClass::YVertical
    }
}

/// Re-expresses a plane given in frame `L` in the parent frame of `pose`.
///
/// With `x_W = R x_L + t`: `n_W = R n_L` and `d_W = d_L − n_W·t`.
pub fn transform_plane(pose: &Pose3, plane: &Plane) -> Plane {
    let n = pose.q * plane.n;
    Plane {
        n,
        d: plane.d - n.dot(&pose.t),
    }
}
