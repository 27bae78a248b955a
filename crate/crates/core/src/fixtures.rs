//! Plan builder from room rectangles and door gaps, plus the reference
//! layouts used by tests and benchmarks.
//!
//! Every room gets its own four half-thickness walls whose start face is the
//! inner face, so adjacent rooms meet on the wall centerline and a room's
//! box runs to that centerline.

use crate::error::{Error, Result};
use crate::plan::{parse_plan, BuildingPlan, RoomSpec, Storey, WallSpec};
use crate::sim::{TrajectorySpec, Waypoint};
use nalgebra::{Vector2, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    South,
    East,
    North,
    West,
}

impl Edge {
    fn tag(self) -> char {
        match self {
            Edge::South => 's',
            Edge::East => 'e',
            Edge::North => 'n',
            Edge::West => 'w',
        }
    }
}

#[derive(Debug, Clone)]
struct Rect {
    id: String,
    min: Vector2<f64>,
    max: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct PlanBuilder {
    storey_id: String,
    elevation: f64,
    half_thickness: f64,
    height: f64,
    rooms: Vec<Rect>,
    doors: Vec<(String, Edge, f64, f64)>,
}

impl Default for PlanBuilder {
    fn default() -> Self {
        Self::new("F0", 0.0)
    }
}

impl PlanBuilder {
    pub fn new(storey_id: &str, elevation: f64) -> Self {
        Self {
            storey_id: storey_id.into(),
            elevation,
            half_thickness: 0.1,
            height: 3.0,
            rooms: Vec::new(),
            doors: Vec::new(),
        }
    }

    pub fn room(mut self, id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        self.rooms.push(Rect {
            id: id.into(),
            min: Vector2::new(x0, y0),
            max: Vector2::new(x1, y1),
        });
        self
    }

    /// Gap `[from, to]` (world x for south/north edges, world y for east/west).
    pub fn door(mut self, room: &str, edge: Edge, from: f64, to: f64) -> Self {
        self.doors.push((room.into(), edge, from, to));
        self
    }

    /// Door through the edge shared by two rooms.
    pub fn opening(self, a: &str, b: &str, from: f64, to: f64) -> Self {
        let (ra, rb) = (self.rect(a).cloned(), self.rect(b).cloned());
        let (Some(ra), Some(rb)) = (ra, rb) else {
            return self;
        };
        let edges = if ra.max.x == rb.min.x {
            Some((Edge::East, Edge::West))
        } else if rb.max.x == ra.min.x {
            Some((Edge::West, Edge::East))
        } else if ra.max.y == rb.min.y {
            Some((Edge::North, Edge::South))
        } else if rb.max.y == ra.min.y {
            Some((Edge::South, Edge::North))
        } else {
            None
        };
        match edges {
            Some((ea, eb)) => self.door(a, ea, from, to).door(b, eb, from, to),
            None => self,
        }
    }

    fn rect(&self, id: &str) -> Option<&Rect> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn build(&self) -> Result<BuildingPlan> {
        let h = self.half_thickness;
        let mut walls = Vec::new();
        let mut rooms = Vec::new();
        for r in &self.rooms {
            let mut firsts = Vec::with_capacity(4);
            for edge in [Edge::South, Edge::East, Edge::North, Edge::West] {
                let (lo, hi) = match edge {
                    Edge::South | Edge::North => (r.min.x, r.max.x),
                    Edge::East | Edge::West => (r.min.y + h, r.max.y - h),
                };
                let gaps: Vec<(f64, f64)> = self
                    .doors
                    .iter()
                    .filter(|d| d.0 == r.id && d.1 == edge)
                    .map(|d| (d.2, d.3))
                    .collect();
                let segments = subtract(lo, hi, &gaps);
                if segments.is_empty() {
                    return Err(Error::InvalidPlan(format!(
                        "room `{}` has no wall left on its {edge:?} edge",
                        r.id
                    )));
                }
                for (k, (a, b)) in segments.into_iter().enumerate() {
                    let (start, normal) = match edge {
                        Edge::South => (Vector3::new(a, r.min.y + h, 0.0), Vector3::new(0.0, -1.0, 0.0)),
                        Edge::North => (Vector3::new(b, r.max.y - h, 0.0), Vector3::new(0.0, 1.0, 0.0)),
                        Edge::East => (Vector3::new(r.max.x - h, a, 0.0), Vector3::new(1.0, 0.0, 0.0)),
                        Edge::West => (Vector3::new(r.min.x + h, b, 0.0), Vector3::new(-1.0, 0.0, 0.0)),
                    };
                    let id = format!("{}_{}{k}", r.id, edge.tag());
                    if k == 0 {
                        firsts.push(id.clone());
                    }
                    walls.push(WallSpec {
                        id,
                        storey_id: self.storey_id.clone(),
                        start: start + Vector3::z() * self.elevation,
                        normal,
                        thickness: h,
                        length: b - a,
                        height: self.height,
                    });
                }
            }
            rooms.push(RoomSpec {
                id: r.id.clone(),
                storey_id: self.storey_id.clone(),
                anchor: (r.min + r.max) * 0.5,
                bbox_min: r.min,
                bbox_max: r.max,
                wall_ids: [
                    firsts[0].clone(),
                    firsts[1].clone(),
                    firsts[2].clone(),
                    firsts[3].clone(),
                ],
            });
        }
        let plan = BuildingPlan {
            storeys: vec![Storey {
                id: self.storey_id.clone(),
                elevation: self.elevation,
                walls,
                rooms,
            }],
        };
        // run the result through the validating parser
        parse_plan(&plan.to_text())
    }
}

/// Pieces of `[lo, hi]` left after removing `gaps`.
fn subtract(lo: f64, hi: f64, gaps: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut gaps = gaps.to_vec();
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut cur = lo;
    for (a, b) in gaps {
        if a > cur + 1e-9 {
            out.push((cur, a.min(hi)));
        }
        cur = cur.max(b);
    }
    if hi > cur + 1e-9 {
        out.push((cur, hi));
    }
    out
}

pub fn single_room() -> BuildingPlan {
    PlanBuilder::default()
        .room("r1", 0.0, 0.0, 5.0, 4.0)
        .build()
        .expect("fixture plan is valid")
}

/// Three rooms on a 15 m × 8 m storey: a tall west room and two stacked east rooms.
pub fn three_rooms() -> BuildingPlan {
    PlanBuilder::default()
        .room("r1", 0.0, 0.0, 5.0, 8.0)
        .room("r2", 5.0, 0.0, 15.0, 4.5)
        .room("r3", 5.0, 4.5, 15.0, 8.0)
        .opening("r1", "r2", 1.5, 2.5)
        .opening("r2", "r3", 11.0, 12.0)
        .opening("r1", "r3", 6.0, 7.0)
        .build()
        .expect("fixture plan is valid")
}

/// Two identical rooms `a` and `b` opening onto a hallway `h`, plus a closed room `c`.
/// The twins sit either side of x = 0 so neither is farther from the origin.
pub fn twin_rooms() -> BuildingPlan {
    PlanBuilder::default()
        .room("a", -5.0, 0.0, 0.0, 4.0)
        .room("b", 0.0, 0.0, 5.0, 4.0)
        .room("h", -5.0, 4.0, 5.0, 7.0)
        .room("c", 5.0, 0.0, 10.0, 7.0)
        .opening("a", "h", -3.0, -2.0)
        .opening("b", "h", 2.0, 3.0)
        .build()
        .expect("fixture plan is valid")
}

fn path(points: &[(f64, f64)]) -> TrajectorySpec {
    TrajectorySpec {
        waypoints: points.iter().map(|&(x, y)| Waypoint::new(x, y)).collect(),
        speed: 0.5,
        rate: 10.0,
        z: 0.0,
    }
}

/// Loop through all three rooms of [`three_rooms`].
pub fn three_rooms_path() -> TrajectorySpec {
    path(&[(3.0, 2.0), (11.5, 2.0), (11.5, 6.5), (2.5, 6.5), (2.5, 4.0)])
}

/// From twin room `a` into the west half of the hallway.
pub fn twin_rooms_path() -> TrajectorySpec {
    path(&[
        (-3.5, 1.5),
        (-2.5, 2.0),
        (-2.5, 5.5),
        (-4.0, 5.5),
        (-4.0, 6.2),
        (-1.0, 6.2),
        (-1.0, 5.0),
    ])
}
