//! Room-aware Monte Carlo localization against the prior wall layer.
//!
//! Each particle is a full pose in the world frame. Observed planes are
//! moved into the world through the particle pose and matched to prior
//! wall faces; with room scoping a particle only considers the faces of the
//! room it stands in.

mod association;
mod resample;

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, MahalanobisGate, Plane, Pose3};
use crate::obslog::Frame;
use crate::plan::PriorGraph;
use crate::rng::{domain, stream, substream};

pub use association::{
    associate, selector_name, selectors, Association, LandmarkSelector, LandmarkTable, Match,
    RoomScoped, StoreyWide,
};
pub use resample::{effective_sample_size, resamplers, Multinomial, Resampler, Systematic};

/// Weight given to a particle that matched nothing in a step.
pub const FLOOR_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose3,
    pub weight: f64,
    /// Index of the containing room in the prior, if any.
    pub room: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub seed: u64,
    pub step: u64,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Highest-weight particle; the first one on ties.
    pub fn best(&self) -> Option<&Particle> {
        self.particles
            .iter()
            .fold(None, |best: Option<&Particle>, p| match best {
                Some(b) if b.weight >= p.weight => Some(b),
                _ => Some(p),
            })
    }

    /// Unweighted mean position and circular-mean yaw.
    pub fn mean(&self) -> (Vector3<f64>, f64) {
        let n = self.particles.len().max(1) as f64;
        let mut t = Vector3::zeros();
        let (mut s, mut c) = (0.0, 0.0);
        for p in &self.particles {
            t += p.pose.t;
            let yaw = p.pose.yaw();
            s += yaw.sin();
            c += yaw.cos();
        }
        (t / n, s.atan2(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightParams {
    pub sigma: f64,
    pub gate: MahalanobisGate,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            gate: MahalanobisGate::default(),
        }
    }
}

impl WeightParams {
    /// Gaussian normalizer `(2πσ²)^(-1/2)`.
    pub fn mu(&self) -> f64 {
        (2.0 * PI * self.sigma * self.sigma).powf(-0.5)
    }

    pub fn factor(&self, delta: &Vector3<f64>) -> f64 {
        self.mu() * (-delta.norm_squared() / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        self.gate.validate()
    }
}

/// Per-step standard deviations of the motion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionNoise {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            x: 0.02,
            y: 0.02,
            yaw: 1.0_f64.to_radians(),
        }
    }
}

impl MotionNoise {
    pub fn zero() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceCriteria {
    pub pos_tol: f64,
    pub yaw_tol: f64,
    pub min_steps: u64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            pos_tol: 0.5,
            yaw_tol: 10f64.to_radians(),
            min_steps: 5,
        }
    }
}

/// Robot motion between consecutive frames, expressed in the earlier frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomIncrement {
    pub delta: Pose3,
}

impl OdomIncrement {
    pub fn between(prev: &Pose3, cur: &Pose3) -> Self {
        Self {
            delta: prev.between(cur),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MclParams {
    pub particles: usize,
    pub weight: WeightParams,
    pub motion_noise: MotionNoise,
    pub convergence: ConvergenceCriteria,
    /// Resample when `N_eff < resample_ratio · N`.
    pub resample_ratio: f64,
    pub selector: String,
    pub resampler: String,
    pub parallel: bool,
    /// The filter only updates once the robot has moved this far (meters)
    /// or turned this much (radians) since the last update.
    pub update_min_distance: f64,
    pub update_min_angle: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        Self {
            particles: 1000,
            weight: WeightParams::default(),
            motion_noise: MotionNoise::default(),
            convergence: ConvergenceCriteria::default(),
            resample_ratio: 0.5,
            selector: "room".into(),
            resampler: "systematic".into(),
            parallel: false,
            update_min_distance: 0.2,
            update_min_angle: 10f64.to_radians(),
        }
    }
}

impl MclParams {
    pub fn with_topo(mut self, topo: bool) -> Self {
        self.selector = selector_name(topo).into();
        self
    }

    /// Whether the motion since the last update is large enough for another one.
    pub fn should_update(&self, u: &OdomIncrement) -> bool {
        u.delta.t.norm() >= self.update_min_distance
            || u.delta.rotation_angle() >= self.update_min_angle
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParameter("particle count must be positive".into()));
        }
        if !(self.resample_ratio >= 0.0 && self.resample_ratio <= 1.0) {
            return Err(Error::InvalidParameter("resample_ratio must lie in [0, 1]".into()));
        }
        let c = &self.convergence;
        if !(c.pos_tol > 0.0 && c.yaw_tol > 0.0 && c.min_steps > 0) {
            return Err(Error::InvalidParameter(
                "convergence tolerances must be positive".into(),
            ));
        }
        if !(self.update_min_distance >= 0.0 && self.update_min_angle >= 0.0) {
            return Err(Error::InvalidParameter("update thresholds must be non-negative".into()));
        }
        let m = &self.motion_noise;
        if !(m.x >= 0.0 && m.y >= 0.0 && m.yaw >= 0.0) {
            return Err(Error::InvalidParameter("motion noise must be non-negative".into()));
        }
        self.weight.validate()
    }
}

/// Uniform particles over the union of room boxes, uniform yaw, level attitude.
pub fn init_particles(prior: &PriorGraph, n: usize, seed: u64) -> Result<ParticleSet> {
    init_with_stream(prior, n, seed, 0)
}

fn init_with_stream(prior: &PriorGraph, n: usize, seed: u64, round: u64) -> Result<ParticleSet> {
    if prior.rooms.is_empty() {
        return Err(Error::EmptyPrior);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("particle count must be positive".into()));
    }
    let areas: Vec<f64> = prior.rooms.iter().map(|r| r.area()).collect();
    let total: f64 = areas.iter().sum();
    let mut rng = stream(seed, domain::INIT, round);
    let mut particles = Vec::with_capacity(n);
    while particles.len() < n {
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < areas.len() && u >= areas[k] {
            u -= areas[k];
            k += 1;
        }
        let r = &prior.rooms[k];
        let x = rng.random_range(r.bbox_min.x..=r.bbox_max.x);
        let y = rng.random_range(r.bbox_min.y..=r.bbox_max.y);
        let yaw = wrap_angle(rng.random_range(-PI..PI));
        let p = nalgebra::Vector2::new(x, y);
        // overlapping boxes: keep only draws owned by the sampled room
        if prior.room_at(&p) != Some(k) {
            continue;
        }
        particles.push(Particle {
            pose: Pose3::from_xyz_yaw(x, y, prior.elevation, yaw),
            weight: 1.0 / n as f64,
            room: Some(k),
        });
    }
    Ok(ParticleSet {
        particles,
        seed,
        step: 0,
    })
}

fn for_each_particle<F>(set: &mut ParticleSet, parallel: bool, f: F) -> usize
where
    F: Fn(usize, &mut Particle) -> usize + Sync + Send,
{
    if parallel {
        set.particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| f(i, p))
            .sum()
    } else {
        set.particles
            .iter_mut()
            .enumerate()
            .map(|(i, p)| f(i, p))
            .sum()
    }
}

/// Applies the increment plus a Gaussian perturbation on (x, y, yaw) to every particle.
pub fn predict(
    set: &mut ParticleSet,
    u: &OdomIncrement,
    noise: &MotionNoise,
    table: &LandmarkTable,
    parallel: bool,
) {
    let (seed, step) = (set.seed, set.step);
    let noisy = noise.x > 0.0 || noise.y > 0.0 || noise.yaw > 0.0;
    for_each_particle(set, parallel, |i, p| {
        let delta = if noisy {
            let mut rng = substream(seed, domain::MOTION, step, i as u64);
            let mut g = || rng.sample::<f64, _>(StandardNormal);
            let (dx, dy, dyaw) = (g() * noise.x, g() * noise.y, g() * noise.yaw);
            u.delta.compose(&Pose3::from_xyz_yaw(dx, dy, 0.0, dyaw))
        } else {
            u.delta
        };
        p.pose = p.pose.compose(&delta);
        p.room = table.room_at(&p.pose.t);
        0
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStatus {
    Normalized,
    /// Every weight vanished; the caller should redraw the particles.
    Reinitialize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub status: WeightStatus,
    pub evaluations: usize,
}

/// Multiplies each particle's weight by its match likelihood and renormalizes.
pub fn update_weights(
    set: &mut ParticleSet,
    obs: &[Plane],
    table: &LandmarkTable,
    wp: &WeightParams,
    selector: &dyn LandmarkSelector,
    parallel: bool,
) -> UpdateReport {
    set.step += 1;
    let evaluations = for_each_particle(set, parallel, |_, p| {
        let a = associate(&p.pose, p.room, obs, table, &wp.gate, selector);
        let likelihood = if a.matches.is_empty() {
            FLOOR_WEIGHT
        } else {
            a.matches.iter().map(|m| wp.factor(&m.delta)).product()
        };
        p.weight *= likelihood;
        a.evaluations
    });
    let total = set.weight_sum();
    let n = set.len() as f64;
    let status = if total > 0.0 && total.is_finite() {
        for p in &mut set.particles {
            p.weight /= total;
        }
        WeightStatus::Normalized
    } else {
        for p in &mut set.particles {
            p.weight = 1.0 / n;
        }
        WeightStatus::Reinitialize
    };
    UpdateReport {
        status,
        evaluations,
    }
}

/// Resamples when the effective sample size drops below `ratio · N`;
/// returns whether it did.
pub fn resample(set: &mut ParticleSet, resampler: &dyn Resampler, ratio: f64) -> bool {
    let n = set.len();
    let weights = set.weights();
    if n == 0 || effective_sample_size(&weights) >= ratio * n as f64 {
        return false;
    }
    let mut rng = stream(set.seed, domain::RESAMPLE, set.step);
    let idx = resampler.draw(&weights, &mut rng);
    let old = std::mem::take(&mut set.particles);
    set.particles = idx
        .into_iter()
        .map(|i| Particle {
            weight: 1.0 / n as f64,
            ..old[i]
        })
        .collect();
    true
}

/// Pose of the best particle once it agrees with the particle mean.
pub fn check_convergence(set: &ParticleSet, c: &ConvergenceCriteria) -> Option<Pose3> {
    if set.step < c.min_steps {
        return None;
    }
    let best = set.best()?;
    let (mean_t, mean_yaw) = set.mean();
    let close = (best.pose.t - mean_t).norm() < c.pos_tol
        && wrap_angle(best.pose.yaw() - mean_yaw).abs() < c.yaw_tol;
    close.then_some(best.pose)
}

/// Odometry-to-world alignment `T_WO = T_WR · T_OR⁻¹`.
pub fn initial_transform(best: &Pose3, odom: &Pose3) -> Pose3 {
    best.compose(&odom.inverse())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub status: WeightStatus,
    pub evaluations: usize,
    pub resampled: bool,
    pub converged: Option<Pose3>,
}

/// Filter state plus the strategies it was configured with.
pub struct MonteCarloLocalizer {
    params: MclParams,
    table: LandmarkTable,
    prior: PriorGraph,
    selector: Box<dyn LandmarkSelector>,
    resampler: Box<dyn Resampler>,
    set: ParticleSet,
    reinitializations: u64,
}

impl MonteCarloLocalizer {
    pub fn new(prior: &PriorGraph, params: MclParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let selector = selectors().create(&params.selector)?;
        let resampler = resamplers().create(&params.resampler)?;
        let set = init_particles(prior, params.particles, seed)?;
        Ok(Self {
            table: LandmarkTable::new(prior),
            prior: prior.clone(),
            params,
            selector,
            resampler,
            set,
            reinitializations: 0,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    pub fn table(&self) -> &LandmarkTable {
        &self.table
    }

    pub fn selector(&self) -> &dyn LandmarkSelector {
        self.selector.as_ref()
    }

    pub fn params(&self) -> &MclParams {
        &self.params
    }

    pub fn reinitializations(&self) -> u64 {
        self.reinitializations
    }

    /// One filter cycle: motion (if any), measurement, convergence test, resampling.
    pub fn step(&mut self, motion: Option<&OdomIncrement>, obs: &[Plane]) -> Result<StepReport> {
        let parallel = self.params.parallel;
        if let Some(u) = motion {
            predict(&mut self.set, u, &self.params.motion_noise, &self.table, parallel);
        }
        let report = update_weights(
            &mut self.set,
            obs,
            &self.table,
            &self.params.weight,
            self.selector.as_ref(),
            parallel,
        );
        if report.status == WeightStatus::Reinitialize {
            self.reinitializations += 1;
            let step = self.set.step;
            self.set = init_with_stream(
                &self.prior,
                self.params.particles,
                self.set.seed,
                self.reinitializations,
            )?;
            self.set.step = step;
            return Ok(StepReport {
                status: report.status,
                evaluations: report.evaluations,
                resampled: false,
                converged: None,
            });
        }
        let converged = check_convergence(&self.set, &self.params.convergence);
        let resampled = resample(
            &mut self.set,
            self.resampler.as_ref(),
            self.params.resample_ratio,
        );
        Ok(StepReport {
            status: report.status,
            evaluations: report.evaluations,
            resampled,
            converged,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub frame: usize,
    pub t: f64,
    /// Elapsed log time from the first frame.
    pub elapsed: f64,
    pub pose: Pose3,
    pub odom: Pose3,
    pub t_wo: Pose3,
    pub room: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MclOutcome {
    pub converged: Option<Convergence>,
    pub steps: u64,
    pub evaluations: u64,
    pub reinitializations: u64,
    /// Evenly strided sample of the final particles as `[x, y, weight]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub particles: Vec<[f64; 3]>,
}

/// At most `max` particles, every `⌈N/max⌉`-th one.
pub fn particle_sample(set: &ParticleSet, max: usize) -> Vec<[f64; 3]> {
    let stride = set.len().div_ceil(max.max(1)).max(1);
    set.particles
        .iter()
        .step_by(stride)
        .map(|p| [p.pose.t.x, p.pose.t.y, p.weight])
        .collect()
}

const PARTICLE_SAMPLE: usize = 500;

/// Runs the filter over a log until convergence, the end of the log, or
/// `timeout` seconds of log time.
pub fn run_mcl(
    prior: &PriorGraph,
    frames: &[Frame],
    params: &MclParams,
    seed: u64,
    timeout: Option<f64>,
) -> Result<MclOutcome> {
    let mut mcl = MonteCarloLocalizer::new(prior, params.clone(), seed)?;
    let mut evaluations = 0u64;
    let t0 = frames.first().map_or(0.0, |f| f.t);
    let mut last: Option<&Pose3> = None;
    for (k, f) in frames.iter().enumerate() {
        let elapsed = f.t - t0;
        if timeout.is_some_and(|limit| elapsed > limit) {
            break;
        }
        let motion = match last {
            None => None,
            Some(prev) => {
                let u = OdomIncrement::between(prev, &f.odom);
                if !params.should_update(&u) {
                    continue;
                }
                Some(u)
            }
        };
        last = Some(&f.odom);
        let report = mcl.step(motion.as_ref(), &f.planes)?;
        evaluations += report.evaluations as u64;
        if let Some(pose) = report.converged {
            let room = mcl
                .table
                .room_at(&pose.t)
                .map(|r| prior.rooms[r].id.clone());
            return Ok(MclOutcome {
                converged: Some(Convergence {
                    frame: k,
                    t: f.t,
                    elapsed,
                    pose,
                    odom: f.odom,
                    t_wo: initial_transform(&pose, &f.odom),
                    room,
                }),
                steps: mcl.set.step,
                evaluations,
                reinitializations: mcl.reinitializations,
                particles: particle_sample(&mcl.set, PARTICLE_SAMPLE),
            });
        }
    }
    Ok(MclOutcome {
        converged: None,
        steps: mcl.set.step,
        evaluations,
        reinitializations: mcl.reinitializations,
        particles: particle_sample(&mcl.set, PARTICLE_SAMPLE),
    })
}
