use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{plane_error, transform_plane, WallClass};
use crate::sgraph::{FactorKind, Measurement, NodeRef, Origin, SGraph};
use crate::sim::TimedPose;

/// Translational RMSE between estimates and the ground-truth sample nearest
/// in time, when that sample is within one frame period.
pub fn ate(est: &[TimedPose], gt: &[TimedPose]) -> Result<f64> {
    let mut gt: Vec<&TimedPose> = gt.iter().collect();
    gt.sort_by(|a, b| a.t.total_cmp(&b.t));
    let period = match (gt.first(), gt.last()) {
        (Some(a), Some(b)) if gt.len() > 1 => (b.t - a.t) / (gt.len() - 1) as f64,
        _ => 0.0,
    };
    let tol = period + 1e-9;
    let mut sum = 0.0;
    let mut matched = 0usize;
    for e in est {
        let i = gt.partition_point(|g| g.t < e.t);
        let nearest = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|k| gt.get(k))
            .min_by(|a, b| (a.t - e.t).abs().total_cmp(&(b.t - e.t).abs()));
        if let Some(g) = nearest.filter(|g| (g.t - e.t).abs() <= tol) {
            sum += (e.pose.t - g.pose.t).norm_squared();
            matched += 1;
        }
    }
    if matched == 0 {
        return Err(Error::NoMatchedPoses);
    }
    Ok((sum / matched as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapRmse {
    pub rmse: f64,
    pub associated: usize,
    pub unassociated: usize,
}

/// Plane-offset RMSE of the mapped walls against the plan.
///
/// A plan wall with observations contributes the mean offset of its
/// observations mapped through the optimized keyframes. An observed wall
/// contributes its own offset against the closest same-class plan wall
/// inside the gate; observed walls with no such plan wall are counted
/// as unassociated and left out.
pub fn map_rmse(g: &SGraph) -> Result<MapRmse> {
    let walls = g.walls();
    let mut sums = vec![(0.0, 0usize); walls.len()];
    for f in g.factors() {
        if let (FactorKind::PlaneObs, [NodeRef::Keyframe(k), NodeRef::Wall(w)], Measurement::Plane(z)) =
            (f.kind, f.nodes.as_slice(), &f.measurement)
        {
            if walls[*w].origin == Origin::Prior {
                let mapped = transform_plane(&g.keyframes()[*k].pose, &z.to_plane());
                sums[*w].0 += mapped.d;
                sums[*w].1 += 1;
            }
        }
    }
    let gate = &g.params().gate;
    let mut sq = 0.0;
    let mut associated = 0;
    let mut unassociated = 0;
    for (w, wall) in walls.iter().enumerate() {
        match wall.origin {
            Origin::Prior => {
                let (s, n) = sums[w];
                if n > 0 {
                    sq += (s / n as f64 - wall.minimal.d).powi(2);
                    associated += 1;
                }
            }
            Origin::Observed => {
                let class = wall.class();
                let target = walls
                    .iter()
                    .filter(|p| p.origin == Origin::Prior && p.class() == class && class != WallClass::NonWall)
                    .map(|p| (p, plane_error(&wall.minimal, &p.minimal, gate)))
                    .filter(|(_, e)| gate.accepts(*e))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match target {
                    Some((p, _)) => {
                        sq += (wall.minimal.d - p.minimal.d).powi(2);
                        associated += 1;
                    }
                    None => unassociated += 1,
                }
            }
        }
    }
    if associated == 0 {
        return Err(Error::NoAssociatedWalls { unassociated });
    }
    Ok(MapRmse {
        rmse: (sq / associated as f64).sqrt(),
        associated,
        unassociated,
    })
}
