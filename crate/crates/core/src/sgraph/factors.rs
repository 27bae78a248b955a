//! Residuals of the three graph layers, generic over [`Scalar`] so the same
//! code yields values and exact Jacobians.

use nalgebra::DMatrix;
use serde::Serialize;

use super::jet::Scalar;
use crate::geometry::{wrap_angle, PlaneMinimal, Pose3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Keyframe(usize),
    Wall(usize),
    Room(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Odometry,
    PlaneObs,
    RoomWall,
    PosePrior,
}

impl FactorKind {
    pub fn dim(&self) -> usize {
        match self {
            FactorKind::Odometry | FactorKind::PosePrior => 6,
            FactorKind::PlaneObs => 3,
            FactorKind::RoomWall => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    Pose(Pose3),
    Plane(PlaneMinimal),
    None,
}

/// One residual term `½ rᵀ Ω r`.
///
/// Node order by kind:
/// odometry `[kf_i, kf_j]`, pose prior `[kf]`, plane observation `[kf, wall]`,
/// room-wall `[room, x+, x−, y+, y−]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub nodes: Vec<NodeRef>,
    pub measurement: Measurement,
    pub info: DMatrix<f64>,
}

impl Factor {
    /// `blocks[k]` holds the parameters of `nodes[k]`: a pose as
    /// `[tx, ty, tz, qw, qx, qy, qz]`, a wall as `[φ, θ, d]`, a room as `[cx, cy]`.
    pub fn residual<T: Scalar>(&self, blocks: &[Vec<T>]) -> Vec<T> {
        match (self.kind, &self.measurement) {
            (FactorKind::Odometry, Measurement::Pose(z)) => {
                let xi = PoseT::from_block(&blocks[0]);
                let xj = PoseT::from_block(&blocks[1]);
                let rel = xi.inverse().compose(&xj);
                pose_error(&PoseT::constant(z).inverse().compose(&rel))
            }
            (FactorKind::PosePrior, Measurement::Pose(z)) => {
                let x = PoseT::from_block(&blocks[0]);
                pose_error(&PoseT::constant(z).inverse().compose(&x))
            }
            (FactorKind::PlaneObs, Measurement::Plane(z)) => {
                let x = PoseT::from_block(&blocks[0]);
                plane_obs_residual(&x, &blocks[1], z)
            }
            (FactorKind::RoomWall, _) => room_wall_residual(
                &blocks[0],
                [&blocks[1], &blocks[2], &blocks[3], &blocks[4]],
            ),
            _ => panic!("factor {:?} carries the wrong measurement", self.kind),
        }
    }

    pub fn cost_of(&self, r: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..r.len() {
            for j in 0..r.len() {
                s += r[i] * self.info[(i, j)] * r[j];
            }
        }
        0.5 * s
    }
}

pub(crate) fn qmul<T: Scalar>(a: &[T; 4], b: &[T; 4]) -> [T; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn qconj<T: Scalar>(q: &[T; 4]) -> [T; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

fn qrot<T: Scalar>(q: &[T; 4], v: &[T; 3]) -> [T; 3] {
    let p = [T::cst(0.0), v[0], v[1], v[2]];
    let r = qmul(&qmul(q, &p), &qconj(q));
    [r[1], r[2], r[3]]
}

fn dot<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Pose with generic scalars; the quaternion is assumed unit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PoseT<T> {
    pub t: [T; 3],
    pub q: [T; 4],
}

impl<T: Scalar> PoseT<T> {
    pub fn from_block(b: &[T]) -> Self {
        Self {
            t: [b[0], b[1], b[2]],
            q: [b[3], b[4], b[5], b[6]],
        }
    }

    pub fn constant(p: &Pose3) -> Self {
        let a = p.to_array();
        Self::from_block(&a.map(T::cst))
    }

    pub fn compose(&self, o: &Self) -> Self {
        let r = qrot(&self.q, &o.t);
        Self {
            t: [self.t[0] + r[0], self.t[1] + r[1], self.t[2] + r[2]],
            q: qmul(&self.q, &o.q),
        }
    }

    pub fn inverse(&self) -> Self {
        let qi = qconj(&self.q);
        let t = qrot(&qi, &self.t);
        Self {
            t: [-t[0], -t[1], -t[2]],
            q: qi,
        }
    }
}

/// `[e.t, 2·vec(e.q)]` with the quaternion taken in the `w ≥ 0` hemisphere.
fn pose_error<T: Scalar>(e: &PoseT<T>) -> Vec<T> {
    let s = if e.q[0].value() < 0.0 { -2.0 } else { 2.0 };
    vec![
        e.t[0],
        e.t[1],
        e.t[2],
        e.q[1].scale(s),
        e.q[2].scale(s),
        e.q[3].scale(s),
    ]
}

/// Shifts `x` by a multiple of 2π so its value lies in `(−π, π]`.
fn wrapped<T: Scalar>(x: T) -> T {
    let v = x.value();
    x + T::cst(wrap_angle(v) - v)
}

pub(crate) fn minimal_normal<T: Scalar>(phi: T, theta: T) -> [T; 3] {
    let ct = theta.cos();
    [ct * phi.cos(), ct * phi.sin(), theta.sin()]
}

/// Wall predicted in the keyframe frame minus the measured plane, in minimal form.
fn plane_obs_residual<T: Scalar>(x: &PoseT<T>, wall: &[T], z: &PlaneMinimal) -> Vec<T> {
    let n_w = minimal_normal(wall[0], wall[1]);
    let n_l = qrot(&qconj(&x.q), &n_w);
    let d_l = wall[2] + dot(&n_w, &x.t);
    let phi = n_l[1].atan2(n_l[0]);
    let theta = n_l[2].asin();
    vec![
        wrapped(phi - T::cst(z.phi)),
        wrapped(theta - T::cst(z.theta)),
        d_l - T::cst(z.d),
    ]
}

/// Component of the wall's closest point to the origin along axis `k`.
fn closest_point<T: Scalar>(wall: &[T], k: usize) -> T {
    let n = minimal_normal(wall[0], wall[1]);
    -(wall[2] * n[k])
}

/// Room center minus the midpoints of its x-wall pair and y-wall pair.
fn room_wall_residual<T: Scalar>(room: &[T], walls: [&Vec<T>; 4]) -> Vec<T> {
    let mx = (closest_point(walls[0], 0) + closest_point(walls[1], 0)).scale(0.5);
    let my = (closest_point(walls[2], 1) + closest_point(walls[3], 1)).scale(0.5);
    vec![room[0] - mx, room[1] - my]
}
