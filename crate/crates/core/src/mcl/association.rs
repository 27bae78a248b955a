use nalgebra::{Vector2, Vector3};

use crate::geometry::{
    plane_error, transform_plane, MahalanobisGate, Plane, PlaneMinimal, Pose3, WallClass,
};
use crate::plan::{PriorGraph, RoomSpec};
use crate::registry::Registry;

fn class_slot(c: WallClass) -> Option<usize> {
    match c {
        WallClass::XVertical => Some(0),
        WallClass::YVertical => Some(1),
        WallClass::NonWall => None,
    }
}

/// Wall landmarks of one storey, pre-split by class for the whole storey
/// and for each room.
#[derive(Debug, Clone)]
pub struct LandmarkTable {
    minimal: Vec<PlaneMinimal>,
    ids: Vec<String>,
    rooms: Vec<RoomSpec>,
    storey: [Vec<usize>; 2],
    per_room: Vec<[Vec<usize>; 2]>,
}

impl LandmarkTable {
    pub fn new(prior: &PriorGraph) -> Self {
        let slot_of = |i: usize| class_slot(prior.wall_nodes[i].class);
        let mut storey = [Vec::new(), Vec::new()];
        for i in 0..prior.wall_nodes.len() {
            if let Some(s) = slot_of(i) {
                storey[s].push(i);
            }
        }
        let per_room = prior
            .room_nodes
            .iter()
            .map(|r| {
                let mut lists = [Vec::new(), Vec::new()];
                for &i in &r.walls {
                    if let Some(s) = slot_of(i) {
                        lists[s].push(i);
                    }
                }
                lists
            })
            .collect();
        Self {
            minimal: prior.wall_nodes.iter().map(|w| w.minimal).collect(),
            ids: prior.wall_nodes.iter().map(|w| w.id.clone()).collect(),
            rooms: prior.rooms.clone(),
            storey,
            per_room,
        }
    }

    pub fn room_at(&self, p: &Vector3<f64>) -> Option<usize> {
        let p = Vector2::new(p.x, p.y);
        self.rooms.iter().position(|r| r.contains(&p))
    }

    pub fn rooms(&self) -> &[RoomSpec] {
        &self.rooms
    }

    pub fn node_count(&self) -> usize {
        self.minimal.len()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn minimal(&self, i: usize) -> &PlaneMinimal {
        &self.minimal[i]
    }

    fn storey_class(&self, c: WallClass) -> &[usize] {
        class_slot(c).map_or(&[], |s| &self.storey[s])
    }

    fn room_class(&self, room: usize, c: WallClass) -> &[usize] {
        class_slot(c).map_or(&[], |s| &self.per_room[room][s])
    }
}

/// Chooses which prior wall nodes a particle may match against.
pub trait LandmarkSelector: Send + Sync {
    fn name(&self) -> &'static str;

    fn candidates<'t>(
        &self,
        table: &'t LandmarkTable,
        room: Option<usize>,
        class: WallClass,
    ) -> &'t [usize];

    fn candidate_count(&self, table: &LandmarkTable, room: Option<usize>) -> usize {
        self.candidates(table, room, WallClass::XVertical).len()
            + self.candidates(table, room, WallClass::YVertical).len()
    }
}

/// Walls of the room containing the particle; nothing outside every room.
pub struct RoomScoped;

impl LandmarkSelector for RoomScoped {
    fn name(&self) -> &'static str {
        "room"
    }

    fn candidates<'t>(
        &self,
        table: &'t LandmarkTable,
        room: Option<usize>,
        class: WallClass,
    ) -> &'t [usize] {
        match room {
            Some(r) => table.room_class(r, class),
            None => &[],
        }
    }
}

/// Every wall node of the storey.
pub struct StoreyWide;

impl LandmarkSelector for StoreyWide {
    fn name(&self) -> &'static str {
        "storey"
    }

    fn candidates<'t>(
        &self,
        table: &'t LandmarkTable,
        _room: Option<usize>,
        class: WallClass,
    ) -> &'t [usize] {
        table.storey_class(class)
    }
}

pub fn selectors() -> Registry<dyn LandmarkSelector> {
    let mut r: Registry<dyn LandmarkSelector> = Registry::new("landmark selector");
    r.register("room", || Box::new(RoomScoped));
    r.register("storey", || Box::new(StoreyWide));
    r
}

pub fn selector_name(topo: bool) -> &'static str {
    if topo {
        "room"
    } else {
        "storey"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub obs: usize,
    pub node: usize,
    pub error: f64,
    /// Wrapped minimal-form difference, observation minus landmark.
    pub delta: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    pub matches: Vec<Match>,
    /// Number of landmark comparisons performed.
    pub evaluations: usize,
}

/// Matches sensor-frame planes to prior walls for a particle at `pose`.
pub fn associate(
    pose: &Pose3,
    room: Option<usize>,
    obs: &[Plane],
    table: &LandmarkTable,
    gate: &MahalanobisGate,
    selector: &dyn LandmarkSelector,
) -> Association {
    let mut out = Association::default();
    for (k, p) in obs.iter().enumerate() {
        let world = transform_plane(pose, p);
        let class = world.class();
        if class == WallClass::NonWall {
            continue;
        }
        let m = world.to_minimal();
        let mut best: Option<Match> = None;
        for &i in selector.candidates(table, room, class) {
            out.evaluations += 1;
            let err = plane_error(&m, &table.minimal[i], gate);
            if gate.accepts(err) && best.is_none_or(|b| err < b.error) {
                best = Some(Match {
                    obs: k,
                    node: i,
                    error: err,
                    delta: m.difference(&table.minimal[i]),
                });
            }
        }
        out.matches.extend(best);
    }
    out
}
