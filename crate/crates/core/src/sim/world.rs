use nalgebra::{Vector2, Vector3};

use crate::geometry::{Plane, Pose3};
use crate::plan::{PriorGraph, Side, Storey};

const EDGE_TOL: f64 = 1e-9;

/// Finite rectangular wall face: `origin` is a bottom corner, the face runs
/// `length` along `along` and `height` up.
#[derive(Debug, Clone, PartialEq)]
pub struct WallFace {
    /// Index of the matching prior wall node.
    pub node: usize,
    pub plane: Plane,
    pub origin: Vector3<f64>,
    pub along: Vector3<f64>,
    pub length: f64,
    pub height: f64,
}

impl WallFace {
    fn segment(&self) -> (Vector2<f64>, Vector2<f64>) {
        let a = self.origin.xy();
        (a, a + self.along.xy() * self.length)
    }

    /// Whether a point on the plane lies within the face rectangle.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let u = (p - self.origin).dot(&self.along);
        let z = p.z - self.origin.z;
        u >= -EDGE_TOL
            && u <= self.length + EDGE_TOL
            && z >= -EDGE_TOL
            && z <= self.height + EDGE_TOL
    }
}

/// Wall faces of one storey in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub faces: Vec<WallFace>,
}

impl World {
    pub fn empty() -> Self {
        Self { faces: Vec::new() }
    }

    /// Both faces of every wall; face `k` corresponds to prior wall node `k`.
    pub fn from_storey(storey: &Storey, prior: &PriorGraph) -> Self {
        let mut faces = Vec::with_capacity(prior.wall_nodes.len());
        for (i, node) in prior.wall_nodes.iter().enumerate() {
            let w = &storey.walls[i / 2];
            let origin = match node.side {
                Side::Front => w.start,
                Side::Back => w.start + w.normal * w.thickness,
            };
            faces.push(WallFace {
                node: i,
                plane: node.plane,
                origin,
                along: w.along(),
                length: w.length,
                height: w.height,
            });
        }
        Self { faces }
    }

    /// Whether the straight path between two ground points crosses any face
    /// other than `skip` strictly before reaching `to`.
    pub fn occluded(&self, from: &Vector2<f64>, to: &Vector2<f64>, skip: usize) -> bool {
        let r = to - from;
        self.faces.iter().enumerate().any(|(k, f)| {
            if k == skip {
                return false;
            }
            let (a, b) = f.segment();
            let s = b - a;
            let denom = cross(&r, &s);
            if denom.abs() < 1e-12 {
                return false;
            }
            let qp = a - from;
            let t = cross(&qp, &s) / denom;
            let u = cross(&qp, &r) / denom;
            t > 1e-9 && t < 1.0 - 1e-6 && (-EDGE_TOL..=1.0 + EDGE_TOL).contains(&u)
        })
    }

    /// Faces seen from `pose`: the robot is on the face's front side, within
    /// range, the foot of the perpendicular lies on the face, and no other
    /// face blocks the way to it.
    pub fn visible_faces(&self, pose: &Pose3, max_range: f64) -> Vec<usize> {
        let p = pose.t;
        let mut out = Vec::new();
        for (k, f) in self.faces.iter().enumerate() {
            let s = f.plane.signed_distance(&p);
            if !(s < 0.0) || -s > max_range {
                continue;
            }
            let foot = p - f.plane.n * s;
            if !f.contains(&foot) {
                continue;
            }
            if self.occluded(&p.xy(), &foot.xy(), k) {
                continue;
            }
            out.push(k);
        }
        out
    }

    /// Nearest face hit by the ray `origin + t·dir`, `0 < t ≤ max_range`.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, f) in self.faces.iter().enumerate() {
            let denom = f.plane.n.dot(dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = -f.plane.signed_distance(origin) / denom;
            if !(t > 1e-9 && t <= max_range) || best.is_some_and(|(_, bt)| bt <= t) {
                continue;
            }
            if f.contains(&(origin + dir * t)) {
                best = Some((k, t));
            }
        }
        best
    }
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}
