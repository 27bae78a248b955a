//! Building plan entities and the line-oriented plan format.
//!
//! ```text
//! storey <id> <elevation_m>
//! wall   <id> <storey_id> <ax> <ay> <az> <nx> <ny> <nz> <thickness_m> <length_m> <height_m>
//! room   <id> <storey_id> <anchor_x> <anchor_y> <min_x> <min_y> <max_x> <max_y> <wall_id>*4
//! ```
//!
//! A wall's `start` lies on one face; its normal points from that face into
//! the wall body, so the face is seen from the side opposite the normal. The
//! face runs `length` meters from `start` along `ẑ × n` and `height` meters up.

mod prior;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Plane, VERTICAL_LIMIT};

pub use prior::{
    build_prior_layers, duplicate_wall, wall_plane, PriorGraph, RoomNode, Side, WallNode,
};

/// Normals with a norm inside this band are renormalized, outside it rejected.
pub const RENORMALIZE_BAND: (f64, f64) = (0.99, 1.01);

#[derive(Debug, Clone, PartialEq)]
pub struct WallSpec {
    pub id: String,
    pub storey_id: String,
    pub start: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub thickness: f64,
    pub length: f64,
    pub height: f64,
}

impl WallSpec {
    /// Unit direction along the wall face, `ẑ × n` normalized.
    pub fn along(&self) -> Vector3<f64> {
        Vector3::z().cross(&self.normal).normalize()
    }

    pub fn end(&self) -> Vector3<f64> {
        self.start + self.along() * self.length
    }

    pub fn plane(&self) -> Plane {
        wall_plane(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub id: String,
    pub storey_id: String,
    pub anchor: Vector2<f64>,
    pub bbox_min: Vector2<f64>,
    pub bbox_max: Vector2<f64>,
    pub wall_ids: [String; 4],
}

impl RoomSpec {
    pub fn center(&self) -> Vector2<f64> {
        (self.bbox_min + self.bbox_max) * 0.5
    }

    pub fn area(&self) -> f64 {
        let e = self.bbox_max - self.bbox_min;
        e.x * e.y
    }

    pub fn diagonal(&self) -> f64 {
        (self.bbox_max - self.bbox_min).norm()
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        room_contains(self, p)
    }
}

/// Boundary-inclusive bounding-box test.
pub fn room_contains(room: &RoomSpec, p: &Vector2<f64>) -> bool {
    p.x >= room.bbox_min.x && p.x <= room.bbox_max.x && p.y >= room.bbox_min.y && p.y <= room.bbox_max.y
}

#[derive(Debug, Clone, PartialEq)]
pub struct Storey {
    pub id: String,
    pub elevation: f64,
    pub walls: Vec<WallSpec>,
    pub rooms: Vec<RoomSpec>,
}

impl Storey {
    pub fn wall(&self, id: &str) -> Option<&WallSpec> {
        self.walls.iter().find(|w| w.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildingPlan {
    pub storeys: Vec<Storey>,
}

impl BuildingPlan {
    pub fn storey(&self, id: &str) -> Option<&Storey> {
        self.storeys.iter().find(|s| s.id == id)
    }

    /// Storey with the greatest elevation not above `z`; heights below the
    /// lowest storey clamp to it.
    pub fn select_storey(&self, z: f64) -> Result<&Storey> {
        let lowest = self.storeys.first().ok_or(Error::EmptyPlan)?;
        Ok(self
            .storeys
            .iter()
            .rev()
            .find(|s| s.elevation <= z)
            .unwrap_or(lowest))
    }

    pub fn wall_count(&self) -> usize {
        self.storeys.iter().map(|s| s.walls.len()).sum()
    }

    pub fn room_count(&self) -> usize {
        self.storeys.iter().map(|s| s.rooms.len()).sum()
    }

    /// Renders the plan back to the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.storeys {
            let _ = writeln!(out, "storey {} {}", s.id, s.elevation);
        }
        for s in &self.storeys {
            for w in &s.walls {
                let _ = writeln!(
                    out,
                    "wall {} {} {} {} {} {} {} {} {} {} {}",
                    w.id,
                    w.storey_id,
                    w.start.x,
                    w.start.y,
                    w.start.z,
                    w.normal.x,
                    w.normal.y,
                    w.normal.z,
                    w.thickness,
                    w.length,
                    w.height
                );
            }
            for r in &s.rooms {
                let _ = writeln!(
                    out,
                    "room {} {} {} {} {} {} {} {} {} {} {} {}",
                    r.id,
                    r.storey_id,
                    r.anchor.x,
                    r.anchor.y,
                    r.bbox_min.x,
                    r.bbox_min.y,
                    r.bbox_max.x,
                    r.bbox_max.y,
                    r.wall_ids[0],
                    r.wall_ids[1],
                    r.wall_ids[2],
                    r.wall_ids[3]
                );
            }
        }
        out
    }
}

pub fn select_storey(plan: &BuildingPlan, z: f64) -> Result<&Storey> {
    plan.select_storey(z)
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let content = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in content.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token {
                    text: &content[s..i],
                    column: content[..s].chars().count() + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &content[s..],
            column: content[..s].chars().count() + 1,
        });
    }
    tokens
}

struct LineCursor<'a> {
    line: usize,
    line_len: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(&'a str, usize)> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok((t.text, t.column))
            }
            None => Err(self.err(self.line_len + 1, format!("missing {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        Ok(self.next(what)?.0.to_string())
    }

    fn number(&mut self, what: &str) -> Result<(f64, usize)> {
        let (text, column) = self.next(what)?;
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, column)),
            _ => Err(self.err(column, format!("expected number for {what}, found `{text}`"))),
        }
    }

    fn finish(&self) -> Result<()> {
        match self.tokens.get(self.pos) {
            Some(t) => Err(self.err(t.column, format!("unexpected token `{}`", t.text))),
            None => Ok(()),
        }
    }
}

/// Parses and validates a plan document.
pub fn parse_plan(text: &str) -> Result<BuildingPlan> {
    let mut storeys: Vec<Storey> = Vec::new();
    let mut walls: Vec<(usize, WallSpec)> = Vec::new();
    let mut rooms: Vec<(usize, RoomSpec)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        let mut cur = LineCursor {
            line: idx + 1,
            line_len: raw.chars().count(),
            tokens,
            pos: 0,
        };
        let kind = cur.ident("record kind")?;
        match kind.as_str() {
            "storey" => {
                let id = cur.ident("storey id")?;
                let (elevation, _) = cur.number("elevation")?;
                cur.finish()?;
                storeys.push(Storey {
                    id,
                    elevation,
                    walls: Vec::new(),
                    rooms: Vec::new(),
                });
            }
            "wall" => {
                let id = cur.ident("wall id")?;
                let storey_id = cur.ident("storey id")?;
                let mut v = [0.0; 9];
                let names = ["ax", "ay", "az", "nx", "ny", "nz", "thickness", "length", "height"];
                let mut cols = [0usize; 9];
                for (i, name) in names.iter().enumerate() {
                    let (val, col) = cur.number(name)?;
                    v[i] = val;
                    cols[i] = col;
                }
                cur.finish()?;
                let mut normal = Vector3::new(v[3], v[4], v[5]);
                let norm = normal.norm();
                if (norm - 1.0).abs() > crate::geometry::UNIT_TOLERANCE {
                    if norm >= RENORMALIZE_BAND.0 && norm <= RENORMALIZE_BAND.1 {
                        normal /= norm;
                    } else {
                        return Err(Error::NonUnitNormal { wall: id, norm });
                    }
                }
                if normal.z.abs() >= VERTICAL_LIMIT {
                    return Err(Error::InvalidPlan(format!(
                        "wall `{id}` is not vertical (n_z = {})",
                        normal.z
                    )));
                }
                if v[6] < 0.0 {
                    return Err(cur.err(cols[6], "thickness must be non-negative"));
                }
                if v[7] <= 0.0 {
                    return Err(cur.err(cols[7], "length must be positive"));
                }
                if v[8] <= 0.0 {
                    return Err(cur.err(cols[8], "height must be positive"));
                }
                walls.push((
                    cur.line,
                    WallSpec {
                        id,
                        storey_id,
                        start: Vector3::new(v[0], v[1], v[2]),
                        normal,
                        thickness: v[6],
                        length: v[7],
                        height: v[8],
                    },
                ));
            }
            "room" => {
                let id = cur.ident("room id")?;
                let storey_id = cur.ident("storey id")?;
                let mut v = [0.0; 6];
                for (i, name) in ["anchor_x", "anchor_y", "min_x", "min_y", "max_x", "max_y"]
                    .iter()
                    .enumerate()
                {
                    v[i] = cur.number(name)?.0;
                }
                let wall_ids = [
                    cur.ident("wall id 1")?,
                    cur.ident("wall id 2")?,
                    cur.ident("wall id 3")?,
                    cur.ident("wall id 4")?,
                ];
                cur.finish()?;
                rooms.push((
                    cur.line,
                    RoomSpec {
                        id,
                        storey_id,
                        anchor: Vector2::new(v[0], v[1]),
                        bbox_min: Vector2::new(v[2], v[3]),
                        bbox_max: Vector2::new(v[4], v[5]),
                        wall_ids,
                    },
                ));
            }
            other => {
                return Err(cur.err(1 + raw.len() - raw.trim_start().len(), format!(
                    "unknown record kind `{other}`"
                )))
            }
        }
    }

    assemble(storeys, walls, rooms)
}

fn assemble(
    mut storeys: Vec<Storey>,
    walls: Vec<(usize, WallSpec)>,
    rooms: Vec<(usize, RoomSpec)>,
) -> Result<BuildingPlan> {
    let mut seen = HashSet::new();
    for s in &storeys {
        if !seen.insert(s.id.clone()) {
            return Err(Error::InvalidPlan(format!("duplicate storey id `{}`", s.id)));
        }
    }
    for pair in storeys.windows(2) {
        if pair[1].elevation <= pair[0].elevation {
            return Err(Error::InvalidPlan(format!(
                "storey `{}` elevation {} does not increase over `{}`",
                pair[1].id, pair[1].elevation, pair[0].id
            )));
        }
    }
    let index: HashMap<String, usize> = storeys
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();

    let mut wall_storey: HashMap<String, String> = HashMap::new();
    for (line, w) in walls {
        let si = *index.get(&w.storey_id).ok_or_else(|| {
            Error::InvalidPlan(format!(
                "wall `{}` (line {line}) references unknown storey `{}`",
                w.id, w.storey_id
            ))
        })?;
        if wall_storey.insert(w.id.clone(), w.storey_id.clone()).is_some() {
            return Err(Error::InvalidPlan(format!("duplicate wall id `{}`", w.id)));
        }
        storeys[si].walls.push(w);
    }

    let mut room_ids = HashSet::new();
    for (line, r) in rooms {
        let si = *index.get(&r.storey_id).ok_or_else(|| {
            Error::InvalidPlan(format!(
                "room `{}` (line {line}) references unknown storey `{}`",
                r.id, r.storey_id
            ))
        })?;
        if !room_ids.insert(r.id.clone()) {
            return Err(Error::InvalidPlan(format!("duplicate room id `{}`", r.id)));
        }
        if !(r.bbox_min.x < r.bbox_max.x && r.bbox_min.y < r.bbox_max.y) {
            return Err(Error::InvalidPlan(format!(
                "room `{}` has an empty bounding box",
                r.id
            )));
        }
        if !room_contains(&r, &r.anchor) {
            return Err(Error::InvalidPlan(format!(
                "room `{}` anchor lies outside its bounding box",
                r.id
            )));
        }
        let mut distinct = HashSet::new();
        for wid in &r.wall_ids {
            match wall_storey.get(wid) {
                None => {
                    return Err(Error::DanglingReference {
                        room: r.id.clone(),
                        wall: wid.clone(),
                    })
                }
                Some(s) if *s != r.storey_id => {
                    return Err(Error::InvalidPlan(format!(
                        "room `{}` references wall `{wid}` of storey `{s}`",
                        r.id
                    )))
                }
                _ => {}
            }
            if !distinct.insert(wid) {
                return Err(Error::InvalidPlan(format!(
                    "room `{}` lists wall `{wid}` twice",
                    r.id
                )));
            }
        }
        storeys[si].rooms.push(r);
    }

    Ok(BuildingPlan { storeys })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# one room, four walls
storey F0 0.0
wall e F0 5 0 0   1 0 0  0.2 4 3
wall n F0 5 4 0   0 1 0  0.2 5 3
wall w F0 0 4 0  -1 0 0  0.2 4 3
wall s F0 0 0 0   0 -1 0 0.2 5 3
room r1 F0 2.5 2 0 0 5 4 e n w s
";

    #[test]
    fn parses_minimal_document() {
        let plan = parse_plan(MINIMAL).unwrap();
        assert_eq!(plan.storeys.len(), 1);
        assert_eq!(plan.wall_count(), 4);
        assert_eq!(plan.room_count(), 1);
        let s = &plan.storeys[0];
        assert_eq!(s.walls[0].id, "e");
        assert_eq!(s.rooms[0].wall_ids, ["e", "n", "w", "s"].map(String::from));
    }

    #[test]
    fn text_round_trip_is_identity() {
        let plan = parse_plan(MINIMAL).unwrap();
        let again = parse_plan(&plan.to_text()).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn dangling_wall_reference_is_named() {
        let text = MINIMAL.replace("e n w s", "e n w w9");
        match parse_plan(&text) {
            Err(Error::DanglingReference { room, wall }) => {
                assert_eq!(room, "r1");
                assert_eq!(wall, "w9");
            }
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn non_unit_normal_rejected() {
        let text = MINIMAL.replace("wall e F0 5 0 0   1 0 0", "wall e F0 5 0 0   2 0 0");
        assert!(matches!(
            parse_plan(&text),
            Err(Error::NonUnitNormal { ref wall, .. }) if wall == "e"
        ));
    }

    #[test]
    fn near_unit_normal_renormalized() {
        let text = MINIMAL.replace("wall e F0 5 0 0   1 0 0", "wall e F0 5 0 0   1.005 0 0");
        let plan = parse_plan(&text).unwrap();
        assert_eq!(plan.storeys[0].walls[0].normal.x, 1.0);
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let text = "storey F0 0.0\nwall a F0 1 2 x 1 0 0 0.1 1 1\n";
        match parse_plan(text) {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, 15);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_plan("storey F0 0.0 extra") {
            Err(Error::Syntax { line: 1, column: 15, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_plan("  floor F0 0.0") {
            Err(Error::Syntax { line: 1, column: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn horizontal_wall_rejected() {
        let text = "storey F0 0\nwall a F0 0 0 0 0 0 1 0.1 1 1\n";
        assert!(matches!(parse_plan(text), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn storey_elevations_must_increase() {
        assert!(parse_plan("storey a 3\nstorey b 0\n").is_err());
        assert!(parse_plan("storey a 0\nstorey b 3\n").is_ok());
    }

    #[test]
    fn select_storey_examples() {
        let plan = parse_plan("storey g 0.0\nstorey f1 3.0\n").unwrap();
        assert_eq!(plan.select_storey(1.2).unwrap().id, "g");
        assert_eq!(plan.select_storey(3.0).unwrap().id, "f1");
        assert_eq!(plan.select_storey(-0.5).unwrap().id, "g");
        assert!(matches!(
            BuildingPlan::default().select_storey(0.0),
            Err(Error::EmptyPlan)
        ));
    }

    #[test]
    fn room_contains_examples() {
        let plan = parse_plan(MINIMAL).unwrap();
        let r = &plan.storeys[0].rooms[0];
        assert!(room_contains(r, &Vector2::new(2.0, 1.0)));
        assert!(!room_contains(r, &Vector2::new(6.0, 1.0)));
        assert!(room_contains(r, &Vector2::new(5.0, 4.0)));
    }

    #[test]
    fn wall_direction_follows_normal() {
        let plan = parse_plan(MINIMAL).unwrap();
        let e = &plan.storeys[0].walls[0];
        assert_eq!(e.along(), Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(e.end(), Vector3::new(5.0, 4.0, 0.0));
    }
}
