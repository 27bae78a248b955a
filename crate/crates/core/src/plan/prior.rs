use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{room_contains, RoomSpec, Storey, WallSpec};
use crate::error::{Error, Result};
use crate::geometry::{Plane, PlaneMinimal, WallClass};

/// Plane of a wall's start face, `d = −(a·n_x + b·n_y + c·n_z)`.
pub fn wall_plane(w: &WallSpec) -> Plane {
    Plane {
        n: w.normal,
        // + 0.0 folds a negative zero into +0.0 for stable serialization
        d: -w.start.dot(&w.normal) + 0.0,
    }
}

/// Opposite face of a wall whose start face is `p`: normal reversed and
/// the face displaced by `thickness` into the wall body.
///
/// The result satisfies `n_dup = −n` and `d_dup + d = thickness`; applying it
/// twice with the same thickness gives back `p`.
pub fn duplicate_wall(p: &Plane, thickness: f64) -> Plane {
    Plane {
        n: -p.n,
        d: thickness - p.d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Front,
    Back,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Back => "back",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallNode {
    pub id: String,
    pub wall_id: String,
    pub side: Side,
    pub plane: Plane,
    pub minimal: PlaneMinimal,
    pub class: WallClass,
}

impl WallNode {
    fn new(wall_id: &str, side: Side, plane: Plane) -> Self {
        Self {
            id: format!("{wall_id}:{}", side.as_str()),
            wall_id: wall_id.to_string(),
            side,
            minimal: plane.to_minimal(),
            class: plane.class(),
            plane,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomNode {
    pub id: String,
    pub center: Vector2<f64>,
    pub bbox: [f64; 4],
    /// Indices into [`PriorGraph::wall_nodes`], both faces of each wall.
    pub walls: Vec<usize>,
}

/// Prior walls (metric-semantic layer) and rooms (topological layer) of one storey.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGraph {
    pub storey_id: String,
    pub elevation: f64,
    pub wall_nodes: Vec<WallNode>,
    pub room_nodes: Vec<RoomNode>,
    pub rooms: Vec<RoomSpec>,
}

pub fn build_prior_layers(storey: &Storey) -> Result<PriorGraph> {
    let mut wall_nodes = Vec::with_capacity(storey.walls.len() * 2);
    for w in &storey.walls {
        let front = wall_plane(w);
        wall_nodes.push(WallNode::new(&w.id, Side::Front, front));
        wall_nodes.push(WallNode::new(&w.id, Side::Back, duplicate_wall(&front, w.thickness)));
    }

    let mut room_nodes = Vec::with_capacity(storey.rooms.len());
    for r in &storey.rooms {
        let mut walls = Vec::with_capacity(8);
        for wid in &r.wall_ids {
            let idx = storey
                .walls
                .iter()
                .position(|w| &w.id == wid)
                .ok_or_else(|| Error::DanglingReference {
                    room: r.id.clone(),
                    wall: wid.clone(),
                })?;
            walls.push(2 * idx);
            walls.push(2 * idx + 1);
        }
        room_nodes.push(RoomNode {
            id: r.id.clone(),
            center: r.center(),
            bbox: [r.bbox_min.x, r.bbox_min.y, r.bbox_max.x, r.bbox_max.y],
            walls,
        });
    }

    Ok(PriorGraph {
        storey_id: storey.id.clone(),
        elevation: storey.elevation,
        wall_nodes,
        room_nodes,
        rooms: storey.rooms.clone(),
    })
}

#[derive(Serialize)]
struct WallNodeJson<'a> {
    id: &'a str,
    side: Side,
    n: [f64; 3],
    d: f64,
}

#[derive(Serialize)]
struct RoomNodeJson<'a> {
    id: &'a str,
    center: [f64; 2],
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct EdgeJson<'a> {
    room: &'a str,
    walls: Vec<&'a str>,
}

#[derive(Serialize)]
struct PriorGraphJson<'a> {
    wall_nodes: Vec<WallNodeJson<'a>>,
    room_nodes: Vec<RoomNodeJson<'a>>,
    edges: Vec<EdgeJson<'a>>,
}

impl PriorGraph {
    /// First room (declaration order) whose box contains `p`.
    pub fn room_at(&self, p: &Vector2<f64>) -> Option<usize> {
        self.rooms.iter().position(|r| room_contains(r, p))
    }

    pub fn wall_index(&self, id: &str) -> Option<usize> {
        self.wall_nodes.iter().position(|w| w.id == id)
    }

    pub fn room_index(&self, id: &str) -> Option<usize> {
        self.room_nodes.iter().position(|r| r.id == id)
    }

    pub fn total_room_area(&self) -> f64 {
        self.rooms.iter().map(|r| r.area()).sum()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.json_view()).expect("prior graph is always serializable")
    }

    /// Serialized form with keys `wall_nodes`, `room_nodes`, `edges` in that order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.json_view()).expect("prior graph is always serializable")
    }

    fn json_view(&self) -> PriorGraphJson<'_> {
        PriorGraphJson {
            wall_nodes: self
                .wall_nodes
                .iter()
                .map(|w| WallNodeJson {
                    id: &w.id,
                    side: w.side,
                    n: [w.plane.n.x, w.plane.n.y, w.plane.n.z],
                    d: w.plane.d,
                })
                .collect(),
            room_nodes: self
                .room_nodes
                .iter()
                .map(|r| RoomNodeJson {
                    id: &r.id,
                    center: [r.center.x, r.center.y],
                    bbox: r.bbox,
                })
                .collect(),
            edges: self
                .room_nodes
                .iter()
                .map(|r| EdgeJson {
                    room: &r.id,
                    walls: r.walls.iter().map(|&i| self.wall_nodes[i].id.as_str()).collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn wall(start: [f64; 3], n: [f64; 3], t: f64) -> WallSpec {
        WallSpec {
            id: "w".into(),
            storey_id: "s".into(),
            start: Vector3::from(start),
            normal: Vector3::from(n),
            thickness: t,
            length: 1.0,
            height: 1.0,
        }
    }

    #[test]
    fn wall_plane_examples() {
        let p = wall_plane(&wall([2.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.1));
        assert_eq!((p.n, p.d), (Vector3::new(1.0, 0.0, 0.0), -2.0));
        let p = wall_plane(&wall([1.0, 3.0, 0.0], [0.0, 1.0, 0.0], 0.1));
        assert_eq!(p.d, -3.0);
        let n = Vector3::new(0.6, 0.8, 0.0);
        let p = wall_plane(&wall([0.0, 0.0, 0.0], [0.6, 0.8, 0.0], 0.1));
        assert_eq!(p.n, n);
        assert_eq!(p.d, 0.0);
    }

    #[test]
    fn duplicate_wall_is_the_far_face() {
        let p = Plane::new(Vector3::new(1.0, 0.0, 0.0), -2.0).unwrap();
        let dup = duplicate_wall(&p, 0.2);
        assert_eq!(dup.n, Vector3::new(-1.0, 0.0, 0.0));
        assert_relative_eq!(dup.d, 2.2, epsilon = 1e-15);
        // the far face passes through start + T·n
        assert_relative_eq!(dup.signed_distance(&Vector3::new(2.2, 7.0, 1.0)), 0.0, epsilon = 1e-15);
        assert_eq!(p.d, -2.0, "original untouched");

        let zero = duplicate_wall(&p, 0.0);
        assert_eq!(zero, p.flipped());
        assert_eq!(duplicate_wall(&dup, 0.2), p);
    }

    const TWO_ROOMS: &str = "\
storey F0 0
wall a F0 0 0 0 0 -1 0 0.1 10 3
wall b F0 5 0 0 1 0 0 0.1 4 3
wall c F0 10 4 0 0 1 0 0.1 10 3
wall d F0 0 4 0 -1 0 0 0.1 4 3
wall e F0 10 0 0 1 0 0 0.1 4 3
room r1 F0 2 2 0 0 5 4 a b c d
room r2 F0 7 2 5 0 10 4 a b c e
";

    #[test]
    fn counts_nodes_and_edges() {
        let plan = parse_plan(TWO_ROOMS).unwrap();
        let g = build_prior_layers(&plan.storeys[0]).unwrap();
        assert_eq!(g.wall_nodes.len(), 10);
        assert_eq!(g.room_nodes.len(), 2);
        assert!(g.room_nodes.iter().all(|r| r.walls.len() == 8));
        // shared walls a, b, c appear in both edge sets
        let shared: Vec<_> = g.room_nodes[0]
            .walls
            .iter()
            .filter(|i| g.room_nodes[1].walls.contains(i))
            .collect();
        assert_eq!(shared.len(), 6);
        assert_eq!(g.room_nodes[1].center, Vector2::new(7.5, 2.0));
    }

    #[test]
    fn storey_without_rooms_has_empty_topology() {
        let plan = parse_plan("storey F0 0\nwall a F0 0 0 0 1 0 0 0.1 1 1\n").unwrap();
        let g = build_prior_layers(&plan.storeys[0]).unwrap();
        assert!(g.room_nodes.is_empty());
        assert_eq!(g.wall_nodes.len(), 2);
    }

    #[test]
    fn json_keys_in_fixed_order() {
        let plan = parse_plan(TWO_ROOMS).unwrap();
        let g = build_prior_layers(&plan.storeys[0]).unwrap();
        let s = serde_json::to_string(&g.json_view()).unwrap();
        let wn = s.find("\"wall_nodes\"").unwrap();
        let rn = s.find("\"room_nodes\"").unwrap();
        let ed = s.find("\"edges\"").unwrap();
        assert!(wn < rn && rn < ed);
        assert!(s.starts_with("{\"wall_nodes\":[{\"id\":\"a:front\",\"side\":\"front\",\"n\":[0.0,-1.0,0.0],\"d\":0.0}"));
        assert_eq!(g.to_json(), build_prior_layers(&plan.storeys[0]).unwrap().to_json());
    }

    #[test]
    fn room_at_uses_declaration_order_on_shared_boundary() {
        let plan = parse_plan(TWO_ROOMS).unwrap();
        let g = build_prior_layers(&plan.storeys[0]).unwrap();
        assert_eq!(g.room_at(&Vector2::new(5.0, 1.0)), Some(0));
        assert_eq!(g.room_at(&Vector2::new(6.0, 1.0)), Some(1));
        assert_eq!(g.room_at(&Vector2::new(11.0, 1.0)), None);
    }
}
