//! Three-layer situational graph: keyframes tied to the plan's walls and rooms.

pub mod factors;
pub mod jet;
mod solver;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    plane_error, transform_plane, MahalanobisGate, Plane, PlaneMinimal, Pose3, WallClass,
};
use crate::obslog::Frame;
use crate::plan::{PriorGraph, Side};
pub use factors::{Factor, FactorKind, Measurement, NodeRef};
pub use solver::OptimizeReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Prior,
    Observed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphWall {
    pub id: String,
    pub origin: Origin,
    pub side: Option<Side>,
    pub minimal: PlaneMinimal,
}

impl GraphWall {
    pub fn plane(&self) -> Plane {
        self.minimal.to_plane()
    }

    pub fn class(&self) -> WallClass {
        self.plane().class()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphRoom {
    pub id: String,
    pub origin: Origin,
    pub center: Vector2<f64>,
    pub bbox: Option<[f64; 4]>,
    /// Wall node indices of a plan room (both faces of its four walls).
    pub walls: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub id: usize,
    pub t: f64,
    pub odom: Pose3,
    pub pose: Pose3,
}

/// Four walls bounding a room seen from one keyframe: `[x+, x−, y+, y−]`
/// by the sign of their normal's dominant component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomCandidate {
    pub center: Vector2<f64>,
    pub walls: [usize; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomMatch {
    pub room: usize,
    pub created: bool,
    pub merged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgraphParams {
    pub keyframe_distance: f64,
    /// Radians.
    pub keyframe_angle: f64,
    pub gate: MahalanobisGate,
    pub room_tol: f64,
    pub odom_sigma_t: f64,
    pub odom_sigma_r: f64,
    pub plane_sigma_angle: f64,
    pub plane_sigma_offset: f64,
    pub room_sigma: f64,
    pub prior_sigma_t: f64,
    pub prior_sigma_r: f64,
    /// Largest difference between a candidate's wall spacing and a plan
    /// room's extent, per axis, for the two to match.
    pub room_size_tol: f64,
    /// Sigma on height, roll and pitch in pose priors and odometry; the floor is flat.
    pub planar_sigma: f64,
    pub max_iters: usize,
}

impl Default for SgraphParams {
    fn default() -> Self {
        Self {
            keyframe_distance: 1.0,
            keyframe_angle: 15f64.to_radians(),
            gate: MahalanobisGate::default(),
            room_tol: 2.0,
            odom_sigma_t: 0.05,
            odom_sigma_r: 0.02,
            plane_sigma_angle: 0.01,
            plane_sigma_offset: 0.02,
            room_sigma: 0.1,
            prior_sigma_t: 10.0,
            prior_sigma_r: 1.0,
            room_size_tol: 0.5,
            planar_sigma: 0.01,
            max_iters: 10,
        }
    }
}

impl SgraphParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("keyframe_distance", self.keyframe_distance),
            ("keyframe_angle", self.keyframe_angle),
            ("room_tol", self.room_tol),
            ("odom_sigma_t", self.odom_sigma_t),
            ("odom_sigma_r", self.odom_sigma_r),
            ("plane_sigma_angle", self.plane_sigma_angle),
            ("plane_sigma_offset", self.plane_sigma_offset),
            ("room_sigma", self.room_sigma),
            ("prior_sigma_t", self.prior_sigma_t),
            ("prior_sigma_r", self.prior_sigma_r),
            ("room_size_tol", self.room_size_tol),
            ("planar_sigma", self.planar_sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("sgraph {name} must be positive")));
            }
        }
        self.gate.validate()
    }

    /// Residual order is x, y, z, then the rotation about x, y, z.
    fn pose_info(&self, st: f64, sr: f64) -> DMatrix<f64> {
        let (a, b, p) = (1.0 / (st * st), 1.0 / (sr * sr), 1.0 / self.planar_sigma.powi(2));
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, p, p, p, b]))
    }

    fn plane_info(&self) -> DMatrix<f64> {
        let a = 1.0 / self.plane_sigma_angle.powi(2);
        let d = 1.0 / self.plane_sigma_offset.powi(2);
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, d]))
    }

    fn room_info(&self) -> DMatrix<f64> {
        DMatrix::identity(2, 2) / self.room_sigma.powi(2)
    }
}

#[derive(Debug, Clone)]
pub struct SGraph {
    params: SgraphParams,
    prior: PriorGraph,
    t_wo: Pose3,
    keyframes: Vec<Keyframe>,
    walls: Vec<GraphWall>,
    rooms: Vec<GraphRoom>,
    factors: Vec<Factor>,
    observed_walls_created: usize,
    observed_rooms_created: usize,
}

/// What one call to [`SGraph::process_frame`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub keyframe: Option<usize>,
    pub room: Option<RoomMatch>,
    pub optimize: Option<OptimizeReport>,
}

impl SGraph {
    /// Graph holding the plan's wall and room nodes and no keyframes yet.
    pub fn init_graph(prior: &PriorGraph, t_wo: Pose3, params: SgraphParams) -> Result<Self> {
        params.validate()?;
        if prior.wall_nodes.is_empty() {
            return Err(Error::EmptyPrior);
        }
        let walls = prior
            .wall_nodes
            .iter()
            .map(|w| GraphWall {
                id: w.id.clone(),
                origin: Origin::Prior,
                side: Some(w.side),
                minimal: w.minimal,
            })
            .collect();
        let rooms = prior
            .room_nodes
            .iter()
            .map(|r| GraphRoom {
                id: r.id.clone(),
                origin: Origin::Prior,
                center: r.center,
                bbox: Some(r.bbox),
                walls: r.walls.clone(),
            })
            .collect();
        Ok(Self {
            params,
            prior: prior.clone(),
            t_wo,
            keyframes: Vec::new(),
            walls,
            rooms,
            factors: Vec::new(),
            observed_walls_created: 0,
            observed_rooms_created: 0,
        })
    }

    pub fn params(&self) -> &SgraphParams {
        &self.params
    }

    pub fn t_wo(&self) -> &Pose3 {
        &self.t_wo
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn walls(&self) -> &[GraphWall] {
        &self.walls
    }

    pub fn rooms(&self) -> &[GraphRoom] {
        &self.rooms
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn prior(&self) -> &PriorGraph {
        &self.prior
    }

    /// Creates a keyframe if the odometry moved far enough since the last one,
    /// links it by odometry and associates its observations.
    pub fn add_keyframe(&mut self, t: f64, odom: &Pose3, obs: &[Plane]) -> Option<usize> {
        let pose = match self.keyframes.last() {
            None => self.t_wo.compose(odom),
            Some(last) => {
                let rel = last.odom.between(odom);
                if rel.t.norm() < self.params.keyframe_distance
                    && rel.rotation_angle() < self.params.keyframe_angle
                {
                    return None;
                }
                last.pose.compose(&rel)
            }
        };
        let id = self.keyframes.len();
        self.keyframes.push(Keyframe {
            id,
            t,
            odom: *odom,
            pose,
        });
        if id == 0 {
            self.factors.push(Factor {
                kind: FactorKind::PosePrior,
                nodes: vec![NodeRef::Keyframe(0)],
                measurement: Measurement::Pose(pose),
                info: self.params.pose_info(self.params.prior_sigma_t, self.params.prior_sigma_r),
            });
        } else {
            let prev = &self.keyframes[id - 1];
            self.factors.push(Factor {
                kind: FactorKind::Odometry,
                nodes: vec![NodeRef::Keyframe(id - 1), NodeRef::Keyframe(id)],
                measurement: Measurement::Pose(prev.odom.between(odom)),
                info: self.params.pose_info(self.params.odom_sigma_t, self.params.odom_sigma_r),
            });
        }
        for p in obs {
            self.associate_plane(p, id);
        }
        Some(id)
    }

    /// Adds a plane factor from keyframe `kf` to the best same-class wall
    /// under the gate, or to a new observed wall. Returns the wall index,
    /// or `None` for floors and ceilings.
    pub fn associate_plane(&mut self, obs: &Plane, kf: usize) -> Option<usize> {
        let world = transform_plane(&self.keyframes[kf].pose, obs);
        let class = world.class();
        if class == WallClass::NonWall {
            return None;
        }
        let m = world.to_minimal();
        let gate = self.params.gate;
        let mut best: Option<(usize, f64)> = None;
        for (i, w) in self.walls.iter().enumerate() {
            if w.class() != class {
                continue;
            }
            let e = plane_error(&m, &w.minimal, &gate);
            if gate.accepts(e) && best.is_none_or(|(_, b)| e < b) {
                best = Some((i, e));
            }
        }
        let wall = match best {
            Some((i, _)) => i,
            None => {
                self.walls.push(GraphWall {
                    id: format!("obs{}", self.observed_walls_created),
                    origin: Origin::Observed,
                    side: None,
                    minimal: m,
                });
                self.observed_walls_created += 1;
                self.walls.len() - 1
            }
        };
        self.factors.push(Factor {
            kind: FactorKind::PlaneObs,
            nodes: vec![NodeRef::Keyframe(kf), NodeRef::Wall(wall)],
            measurement: Measurement::Plane(obs.to_minimal()),
            info: self.params.plane_info(),
        });
        Some(wall)
    }

    /// Walls with a plane factor from keyframe `kf`, in factor order, deduplicated.
    pub fn keyframe_walls(&self, kf: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for f in &self.factors {
            if let (FactorKind::PlaneObs, [NodeRef::Keyframe(k), NodeRef::Wall(w)]) =
                (f.kind, f.nodes.as_slice())
            {
                if *k == kf && !out.contains(w) {
                    out.push(*w);
                }
            }
        }
        out
    }

    /// Room bounded by the nearest wall on each side of the keyframe, if
    /// the keyframe sees a wall on all four sides.
    pub fn detect_room(&self, kf: usize) -> Option<RoomCandidate> {
        let p = self.keyframes[kf].pose.t;
        // [x+, x−, y+, y−] as (wall, distance)
        let mut pick: [Option<(usize, f64)>; 4] = [None; 4];
        for w in self.keyframe_walls(kf) {
            let plane = self.walls[w].plane();
            let slot = match plane.class() {
                WallClass::XVertical => usize::from(plane.n.x < 0.0),
                WallClass::YVertical => 2 + usize::from(plane.n.y < 0.0),
                WallClass::NonWall => continue,
            };
            let dist = plane.signed_distance(&p).abs();
            if pick[slot].is_none_or(|(_, b)| dist < b) {
                pick[slot] = Some((w, dist));
            }
        }
        let walls = [pick[0]?.0, pick[1]?.0, pick[2]?.0, pick[3]?.0];
        let cp = |w: usize, k: usize| {
            let pl = self.walls[w].plane();
            -pl.d * pl.n[k]
        };
        Some(RoomCandidate {
            center: Vector2::new(
                0.5 * (cp(walls[0], 0) + cp(walls[1], 0)),
                0.5 * (cp(walls[2], 1) + cp(walls[3], 1)),
            ),
            walls,
        })
    }

    /// Spacing of the candidate's x walls and y walls.
    fn candidate_size(&self, cand: &RoomCandidate) -> Vector2<f64> {
        let cp = |w: usize, k: usize| {
            let pl = self.walls[w].plane();
            -pl.d * pl.n[k]
        };
        Vector2::new(
            (cp(cand.walls[0], 0) - cp(cand.walls[1], 0)).abs(),
            (cp(cand.walls[2], 1) - cp(cand.walls[3], 1)).abs(),
        )
    }

    /// Matches a candidate to the nearest room within `tol` (ties to the
    /// smallest id) or creates an observed room, adds the room-wall factor and
    /// merges observed walls that duplicate the matched room's plan walls.
    /// Plan rooms whose extent differs from the candidate's wall spacing by
    /// more than `room_size_tol` on either axis are not considered.
    pub fn associate_room(&mut self, cand: &RoomCandidate, tol: f64) -> RoomMatch {
        let size = self.candidate_size(cand);
        let size_tol = self.params.room_size_tol;
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.rooms.iter().enumerate() {
            if let Some(b) = r.bbox {
                let extent = Vector2::new(b[2] - b[0], b[3] - b[1]);
                if (extent - size).abs().max() > size_tol {
                    continue;
                }
            }
            let d = (r.center - cand.center).norm();
            let better = match best {
                None => true,
                Some((b, bd)) => d < bd || (d == bd && r.id < self.rooms[b].id),
            };
            if better {
                best = Some((i, d));
            }
        }
        let (room, created) = match best {
            Some((i, d)) if d <= tol => (i, false),
            _ => {
                self.rooms.push(GraphRoom {
                    id: format!("room_obs{}", self.observed_rooms_created),
                    origin: Origin::Observed,
                    center: cand.center,
                    bbox: None,
                    walls: Vec::new(),
                });
                self.observed_rooms_created += 1;
                (self.rooms.len() - 1, true)
            }
        };

        let nodes: Vec<NodeRef> = std::iter::once(NodeRef::Room(room))
            .chain(cand.walls.iter().map(|&w| NodeRef::Wall(w)))
            .collect();
        if !self
            .factors
            .iter()
            .any(|f| f.kind == FactorKind::RoomWall && f.nodes == nodes)
        {
            self.factors.push(Factor {
                kind: FactorKind::RoomWall,
                nodes,
                measurement: Measurement::None,
                info: self.params.room_info(),
            });
        }

        let mut merged = 0;
        let mut observed: Vec<usize> = cand
            .walls
            .iter()
            .copied()
            .filter(|&w| self.walls[w].origin == Origin::Observed)
            .collect();
        // remove from the back so earlier indices stay valid
        observed.sort_unstable_by(|a, b| b.cmp(a));
        observed.dedup();
        for w in observed {
            if let Some(target) = self.duplicate_target(w, room) {
                self.merge_wall(w, target);
                merged += 1;
            }
        }
        RoomMatch {
            room,
            created,
            merged,
        }
    }

    /// Plan wall of `room` that observed wall `w` duplicates, if any.
    fn duplicate_target(&self, w: usize, room: usize) -> Option<usize> {
        let obs = &self.walls[w];
        let class = obs.class();
        let gate = &self.params.gate;
        self.rooms[room]
            .walls
            .iter()
            .map(|&p| (p, plane_error(&obs.minimal, &self.walls[p].minimal, gate)))
            .filter(|&(p, e)| self.walls[p].class() == class && gate.accepts(e))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, _)| p)
    }

    /// Re-points every factor from `from` to `into` and deletes `from`.
    fn merge_wall(&mut self, from: usize, into: usize) {
        for f in &mut self.factors {
            for n in &mut f.nodes {
                if let NodeRef::Wall(w) = n {
                    if *w == from {
                        *w = into;
                    }
                    if *w > from {
                        *w -= 1;
                    }
                }
            }
        }
        for r in &mut self.rooms {
            for w in &mut r.walls {
                if *w > from {
                    *w -= 1;
                }
            }
        }
        self.walls.remove(from);
    }

    /// Latest keyframe estimate carried forward by the odometry since it.
    pub fn current_pose(&self, odom: &Pose3) -> Option<Pose3> {
        let kf = self.keyframes.last()?;
        Some(kf.pose.compose(&kf.odom.between(odom)))
    }

    /// Keyframe, room association and optimization for one input frame.
    pub fn process_frame(&mut self, frame: &Frame) -> FrameResult {
        let Some(kf) = self.add_keyframe(frame.t, &frame.odom, &frame.planes) else {
            return FrameResult {
                keyframe: None,
                room: None,
                optimize: None,
            };
        };
        let room = self
            .detect_room(kf)
            .map(|c| self.associate_room(&c, self.params.room_tol));
        let report = self.optimize(self.params.max_iters);
        FrameResult {
            keyframe: Some(kf),
            room,
            optimize: Some(report),
        }
    }

    /// Observed walls that lie within the gate of a same-class plan wall.
    pub fn duplicate_wall_count(&self) -> usize {
        let gate = &self.params.gate;
        self.walls
            .iter()
            .filter(|w| w.origin == Origin::Observed)
            .filter(|w| {
                self.walls.iter().any(|p| {
                    p.origin == Origin::Prior
                        && p.class() == w.class()
                        && gate.accepts(plane_error(&w.minimal, &p.minimal, gate))
                })
            })
            .count()
    }

    fn node_id(&self, n: &NodeRef) -> String {
        match n {
            NodeRef::Keyframe(k) => format!("kf{k}"),
            NodeRef::Wall(w) => self.walls[*w].id.clone(),
            NodeRef::Room(r) => self.rooms[*r].id.clone(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let prior = self.prior.to_json_value();
        let snap = Snapshot {
            wall_nodes: self
                .walls
                .iter()
                .map(|w| {
                    let p = w.plane();
                    WallJson {
                        id: &w.id,
                        side: w.side,
                        origin: w.origin,
                        n: [p.n.x, p.n.y, p.n.z],
                        d: p.d,
                    }
                })
                .collect(),
            room_nodes: self
                .rooms
                .iter()
                .map(|r| RoomJson {
                    id: &r.id,
                    origin: r.origin,
                    center: [r.center.x, r.center.y],
                    bbox: r.bbox,
                })
                .collect(),
            edges: prior["edges"].clone(),
            t_wo: self.t_wo,
            keyframes: self
                .keyframes
                .iter()
                .map(|k| KeyframeJson {
                    id: k.id,
                    t: k.t,
                    pose: k.pose,
                })
                .collect(),
            factors: self
                .factors
                .iter()
                .map(|f| {
                    let r = self.residual(f);
                    FactorJson {
                        kind: f.kind,
                        nodes: f.nodes.iter().map(|n| self.node_id(n)).collect(),
                        residual_norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    }
                })
                .collect(),
        };
        serde_json::to_value(snap).expect("graph snapshot is always serializable")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("graph snapshot is always serializable")
    }
}

#[derive(Serialize)]
struct WallJson<'a> {
    id: &'a str,
    side: Option<Side>,
    origin: Origin,
    n: [f64; 3],
    d: f64,
}

#[derive(Serialize)]
struct RoomJson<'a> {
    id: &'a str,
    origin: Origin,
    center: [f64; 2],
    bbox: Option<[f64; 4]>,
}

#[derive(Serialize)]
struct KeyframeJson {
    id: usize,
    t: f64,
    pose: Pose3,
}

#[derive(Serialize)]
struct FactorJson {
    kind: FactorKind,
    nodes: Vec<String>,
    residual_norm: f64,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    wall_nodes: Vec<WallJson<'a>>,
    room_nodes: Vec<RoomJson<'a>>,
    edges: serde_json::Value,
    t_wo: Pose3,
    keyframes: Vec<KeyframeJson>,
    factors: Vec<FactorJson>,
}

/// Runs the graph over `frames` starting from the alignment `t_wo`.
pub fn run_sgraph(
    prior: &PriorGraph,
    frames: &[Frame],
    t_wo: Pose3,
    params: &SgraphParams,
) -> Result<SGraph> {
    let mut g = SGraph::init_graph(prior, t_wo, params.clone())?;
    for f in frames {
        g.process_frame(f);
    }
    Ok(g)
}
