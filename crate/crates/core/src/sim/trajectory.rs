use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose3};

/// `[x, y]` or `[x, y, yaw]`; without a yaw the robot faces along its path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub yaw: Option<f64>,
}

impl From<Vec<f64>> for Waypoint {
    fn from(v: Vec<f64>) -> Self {
        Self {
            x: v.first().copied().unwrap_or(f64::NAN),
            y: v.get(1).copied().unwrap_or(f64::NAN),
            yaw: v.get(2).copied(),
        }
    }
}

impl From<Waypoint> for Vec<f64> {
    fn from(w: Waypoint) -> Self {
        match w.yaw {
            Some(yaw) => vec![w.x, w.y, yaw],
            None => vec![w.x, w.y],
        }
    }
}

impl Waypoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, yaw: None }
    }

    pub fn with_yaw(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: Some(yaw) }
    }

    fn xy(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    /// meters per second
    pub speed: f64,
    /// samples per second
    pub rate: f64,
    #[serde(default)]
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose3,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::InvalidParameter("trajectory needs at least two waypoints".into()));
        }
        if !(self.speed > 0.0 && self.rate > 0.0) {
            return Err(Error::InvalidParameter("speed and rate must be positive".into()));
        }
        for w in &self.waypoints {
            if !(w.x.is_finite() && w.y.is_finite() && w.yaw.is_none_or(f64::is_finite)) {
                return Err(Error::InvalidParameter("waypoints must be finite".into()));
            }
        }
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            if (pair[1].xy() - pair[0].xy()).norm() < 1e-9 {
                return Err(Error::CoincidentWaypoints(i, i + 1));
            }
        }
        Ok(())
    }

    fn heading(&self, seg: usize) -> f64 {
        let d = self.waypoints[seg + 1].xy() - self.waypoints[seg].xy();
        d.y.atan2(d.x)
    }

    /// Yaw held at waypoint `i`: its own, else the heading of the outgoing
    /// segment (incoming for the last one).
    fn waypoint_yaw(&self, i: usize) -> f64 {
        self.waypoints[i]
            .yaw
            .unwrap_or_else(|| self.heading(i.min(self.waypoints.len() - 2)))
    }
}

/// Constant-speed samples along the polyline at `rate`, plus the endpoint.
///
/// Position is linear along each segment; yaw turns along the shorter arc
/// from the yaw at the segment start to the yaw at its end.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Vec<TimedPose>> {
    spec.validate()?;
    let lengths: Vec<f64> = spec
        .waypoints
        .windows(2)
        .map(|p| (p[1].xy() - p[0].xy()).norm())
        .collect();
    let total: f64 = lengths.iter().sum();
    let duration = total / spec.speed;
    let dt = 1.0 / spec.rate;
    let count = (duration * spec.rate + 1e-9).floor() as usize;

    let pose_at = |s: f64| -> Pose3 {
        let mut rest = s;
        let mut seg = 0;
        while seg + 1 < lengths.len() && rest > lengths[seg] {
            rest -= lengths[seg];
            seg += 1;
        }
        let f = (rest / lengths[seg]).clamp(0.0, 1.0);
        let a = &spec.waypoints[seg];
        let b = &spec.waypoints[seg + 1];
        let p = a.xy() + (b.xy() - a.xy()) * f;
        let y0 = spec.waypoint_yaw(seg);
        let y1 = spec.waypoint_yaw(seg + 1);
        let yaw = wrap_angle(y0 + wrap_angle(y1 - y0) * f);
        Pose3::from_xyz_yaw(p.x, p.y, spec.z, yaw)
    };

    let mut out: Vec<TimedPose> = (0..=count)
        .map(|k| {
            let t = k as f64 * dt;
            TimedPose {
                t,
                pose: pose_at((t * spec.speed).min(total)),
            }
        })
        .collect();
    if duration - count as f64 * dt > 1e-9 {
        out.push(TimedPose {
            t: duration,
            pose: pose_at(total),
        });
    }
    Ok(out)
}
