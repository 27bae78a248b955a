//! Deterministic simulator: trajectories, drifting odometry, plane and
//! point-cloud observations of a plan's wall faces.

mod ransac;
mod trajectory;
mod world;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{transform_plane, Plane, Pose3};
use crate::mcl::MotionNoise;
use crate::obslog::Frame;
use crate::registry::Registry;
use crate::rng::{domain, stream, substream, StreamRng};

pub use ransac::{extract_planes_ransac, fit_plane, RansacParams};
pub use trajectory::{generate_trajectory, TimedPose, TrajectorySpec, Waypoint};
pub use world::{WallFace, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-step odometry σ on (x, y, yaw).
    pub odom: MotionNoise,
    /// radians
    pub plane_angle: f64,
    /// meters
    pub plane_offset: f64,
    /// Radial σ of cloud points, meters.
    pub cloud_point: f64,
    /// Used when no seed is given explicitly.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            odom: MotionNoise {
                x: 0.01,
                y: 0.01,
                yaw: 0.2f64.to_radians(),
            },
            plane_angle: 0.5f64.to_radians(),
            plane_offset: 0.02,
            cloud_point: 0.01,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            odom: MotionNoise::zero(),
            plane_angle: 0.0,
            plane_offset: 0.0,
            cloud_point: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.odom.x,
            self.odom.y,
            self.odom.yaw,
            self.plane_angle,
            self.plane_offset,
            self.cloud_point,
        ];
        if all.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("noise sigmas must be non-negative".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudParams {
    pub rings: usize,
    pub azimuth_steps: usize,
    /// Lowest and highest ring elevation, radians.
    pub min_elevation: f64,
    pub max_elevation: f64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            rings: 16,
            azimuth_steps: 720,
            min_elevation: (-15f64).to_radians(),
            max_elevation: 15f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub max_range: f64,
    /// Name of the [`PlaneSource`] producing the plane observations.
    pub source: String,
    pub cloud: CloudParams,
    pub ransac: RansacParams,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            max_range: 15.0,
            source: "direct".into(),
            cloud: CloudParams::default(),
            ransac: RansacParams::default(),
        }
    }
}

fn gauss(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Odometry starting at identity: each ground-truth increment is perturbed
/// on (x, y, yaw) and chained, so errors accumulate.
pub fn simulate_odometry(gt: &[Pose3], noise: &MotionNoise, seed: u64) -> Vec<Pose3> {
    let mut rng = stream(seed, domain::ODOMETRY, 0);
    let mut out = Vec::with_capacity(gt.len());
    let mut acc = Pose3::identity();
    for (k, pose) in gt.iter().enumerate() {
        if k > 0 {
            let inc = gt[k - 1].between(pose);
            let (dx, dy, dyaw) = (
                gauss(&mut rng) * noise.x,
                gauss(&mut rng) * noise.y,
                gauss(&mut rng) * noise.yaw,
            );
            acc = acc.compose(&inc).compose(&Pose3::from_xyz_yaw(dx, dy, 0.0, dyaw));
        }
        out.push(acc);
    }
    out
}

/// Planes of the faces visible from `pose`, in the sensor frame.
pub fn observe_planes(
    world: &World,
    pose: &Pose3,
    max_range: f64,
    noise: &NoiseConfig,
    rng: &mut StreamRng,
) -> Vec<Plane> {
    let inv = pose.inverse();
    world
        .visible_faces(pose, max_range)
        .into_iter()
        .map(|k| {
            let p = transform_plane(&inv, &world.faces[k].plane);
            perturb_plane(&p, noise, rng)
        })
        .collect()
}

fn perturb_plane(p: &Plane, noise: &NoiseConfig, rng: &mut StreamRng) -> Plane {
    if noise.plane_angle == 0.0 && noise.plane_offset == 0.0 {
        return *p;
    }
    let axis = Vector3::new(gauss(rng), gauss(rng), gauss(rng)) * noise.plane_angle;
    let n = UnitQuaternion::from_scaled_axis(axis) * p.n;
    Plane {
        n: n.normalize(),
        d: p.d + gauss(rng) * noise.plane_offset,
    }
}

/// Ray-cast scan in the sensor frame: `rings` elevations by `azimuth_steps`
/// azimuths, first face hit within range, Gaussian radial noise.
pub fn sample_cloud(
    world: &World,
    pose: &Pose3,
    max_range: f64,
    params: &CloudParams,
    sigma: f64,
    rng: &mut StreamRng,
) -> Vec<Vector3<f64>> {
    let mut cloud = Vec::new();
    for ring in 0..params.rings {
        let f = if params.rings > 1 {
            ring as f64 / (params.rings - 1) as f64
        } else {
            0.5
        };
        let el = params.min_elevation + f * (params.max_elevation - params.min_elevation);
        for a in 0..params.azimuth_steps {
            let az = a as f64 / params.azimuth_steps as f64 * std::f64::consts::TAU;
            let dir_l = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let dir_w = pose.q * dir_l;
            if let Some((_, t)) = world.raycast(&pose.t, &dir_w, max_range) {
                let r = if sigma > 0.0 { t + gauss(rng) * sigma } else { t };
                cloud.push(dir_l * r);
            }
        }
    }
    cloud
}

/// Where plane observations come from.
pub trait PlaneSource: Send + Sync {
    fn name(&self) -> &'static str;

    /// Sensor-frame planes seen from `pose`, plus the cloud they came from if any.
    fn observe(
        &self,
        world: &World,
        pose: &Pose3,
        sensor: &SensorConfig,
        noise: &NoiseConfig,
        rng: &mut StreamRng,
    ) -> (Vec<Plane>, Option<Vec<Vector3<f64>>>);
}

/// Ideal plane extractor: visible faces with parameter noise.
pub struct DirectPlanes;

impl PlaneSource for DirectPlanes {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn observe(
        &self,
        world: &World,
        pose: &Pose3,
        sensor: &SensorConfig,
        noise: &NoiseConfig,
        rng: &mut StreamRng,
    ) -> (Vec<Plane>, Option<Vec<Vector3<f64>>>) {
        (observe_planes(world, pose, sensor.max_range, noise, rng), None)
    }
}

/// Ray-cast cloud followed by sequential RANSAC.
pub struct RansacPlanes;

impl PlaneSource for RansacPlanes {
    fn name(&self) -> &'static str {
        "ransac"
    }

    fn observe(
        &self,
        world: &World,
        pose: &Pose3,
        sensor: &SensorConfig,
        noise: &NoiseConfig,
        rng: &mut StreamRng,
    ) -> (Vec<Plane>, Option<Vec<Vector3<f64>>>) {
        let cloud = sample_cloud(world, pose, sensor.max_range, &sensor.cloud, noise.cloud_point, rng);
        let planes = extract_planes_ransac(&cloud, &sensor.ransac, rng);
        (planes, Some(cloud))
    }
}

pub fn plane_sources() -> Registry<dyn PlaneSource> {
    let mut r: Registry<dyn PlaneSource> = Registry::new("plane source");
    r.register("direct", || Box::new(DirectPlanes));
    r.register("ransac", || Box::new(RansacPlanes));
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<TimedPose>,
    pub clouds: Option<Vec<Vec<Vector3<f64>>>>,
}

/// Observation log for a ground-truth trajectory.
pub fn simulate(
    world: &World,
    trajectory: &[TimedPose],
    noise: &NoiseConfig,
    sensor: &SensorConfig,
    seed: u64,
    keep_clouds: bool,
) -> Result<SimOutput> {
    noise.validate()?;
    let source = plane_sources().create(&sensor.source)?;
    let poses: Vec<Pose3> = trajectory.iter().map(|p| p.pose).collect();
    let odom = simulate_odometry(&poses, &noise.odom, seed);
    let mut frames = Vec::with_capacity(trajectory.len());
    let mut clouds = keep_clouds.then(Vec::new);
    for (k, tp) in trajectory.iter().enumerate() {
        let mut rng = substream(seed, domain::PLANES, k as u64, 0);
        let (planes, cloud) = source.observe(world, &tp.pose, sensor, noise, &mut rng);
        if let Some(cs) = clouds.as_mut() {
            cs.push(cloud.unwrap_or_default());
        }
        frames.push(Frame {
            t: tp.t,
            odom: odom[k],
            planes,
        });
    }
    Ok(SimOutput {
        frames,
        ground_truth: trajectory.to_vec(),
        clouds,
    })
}
