//! End-to-end experiments: simulate, localize with the filter, track with
//! the graph, score against ground truth.

pub mod metrics;
pub mod plot;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcl::{run_mcl, selector_name, MclParams};
use crate::plan::{build_prior_layers, parse_plan, BuildingPlan, PriorGraph};
use crate::sgraph::{run_sgraph, SgraphParams};
use crate::sim::{
    generate_trajectory, simulate, NoiseConfig, SensorConfig, TimedPose, TrajectorySpec, World,
};
pub use metrics::{ate, map_rmse, MapRmse};

/// Correct-room threshold on the converged position error, meters.
pub const CORRECT_RADIUS: f64 = 0.5;

/// A value given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inline<T> {
    Path(String),
    Value(T),
}

fn default_topo() -> bool {
    true
}

fn default_timeout() -> f64 {
    120.0
}

/// Benchmark config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Plan file, relative to the config file.
    pub plan: String,
    pub trajectory: Inline<TrajectorySpec>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub mcl: MclParams,
    #[serde(default)]
    pub sgraph: SgraphParams,
    pub seeds: Vec<u64>,
    #[serde(default = "default_topo")]
    pub topo: bool,
    /// Simulated seconds before a run is declared not localized.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Bench {
    pub plan: BuildingPlan,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseConfig,
    pub sensor: SensorConfig,
    pub mcl: MclParams,
    pub sgraph: SgraphParams,
    pub seeds: Vec<u64>,
    pub topo: bool,
    pub timeout: f64,
}

impl Bench {
    pub fn from_config(cfg: BenchConfig, base: &Path) -> Result<Self> {
        let read = |p: &str| {
            std::fs::read_to_string(base.join(p))
                .map_err(|e| Error::Config(format!("cannot read `{p}`: {e}")))
        };
        let plan = parse_plan(&read(&cfg.plan)?)?;
        let trajectory = match cfg.trajectory {
            Inline::Value(t) => t,
            Inline::Path(p) => serde_json::from_str(&read(&p)?)?,
        };
        Ok(Self {
            plan,
            trajectory,
            noise: cfg.noise,
            sensor: cfg.sensor,
            mcl: cfg.mcl,
            sgraph: cfg.sgraph,
            seeds: cfg.seeds,
            topo: cfg.topo,
            timeout: cfg.timeout,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: BenchConfig = serde_json::from_str(&text)?;
        Self::from_config(cfg, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if !(self.timeout > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        self.trajectory.validate()?;
        self.noise.validate()?;
        self.mcl.validate()?;
        self.sgraph.validate()
    }

    /// Filter parameters with the selector set by the topo flag.
    pub fn mcl_params(&self) -> MclParams {
        self.mcl.clone().with_topo(self.topo)
    }
}

/// Plan-derived inputs shared by every run.
#[derive(Debug, Clone)]
pub struct Scene {
    pub prior: PriorGraph,
    pub world: World,
    pub trajectory: Vec<TimedPose>,
}

impl Scene {
    pub fn new(bench: &Bench) -> Result<Self> {
        let storey = bench.plan.select_storey(bench.trajectory.z)?;
        let prior = build_prior_layers(storey)?;
        let world = World::from_storey(storey, &prior);
        let trajectory = generate_trajectory(&bench.trajectory)?;
        Ok(Self {
            prior,
            world,
            trajectory,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    #[serde(rename = "localized")]
    Localized,
    #[serde(rename = "N.L.")]
    NotLocalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub status: RunStatus,
    /// Simulated seconds from the first frame to convergence.
    pub convergence_time: Option<f64>,
    pub converged_room: Option<String>,
    pub true_room: Option<String>,
    /// Converged within [`CORRECT_RADIUS`] of the true position.
    pub correct_room: bool,
    pub position_error: Option<f64>,
    pub ate_rmse: Option<f64>,
    pub map_rmse: Option<f64>,
    pub walls_associated: Option<usize>,
    pub walls_unassociated: Option<usize>,
    pub duplicate_walls: Option<usize>,
    pub keyframes: usize,
    pub mcl_steps: u64,
    pub association_evaluations: u64,
    pub reinitializations: u64,
    /// `[t, gt_x, gt_y, est_x, est_y]` per keyframe.
    pub trajectory: Vec<[f64; 5]>,
    /// `[x, y, weight]` sample of the particles when the filter stopped.
    pub particles: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub localized: usize,
    pub not_localized: usize,
    pub correct_room: usize,
    pub correct_rate: f64,
    pub ate_rmse: Option<Stats>,
    pub convergence_time: Option<Stats>,
    pub map_rmse: Option<Stats>,
    pub association_evaluations: u64,
}

impl Summary {
    pub fn of(runs: &[RunRecord]) -> Self {
        let pick = |f: fn(&RunRecord) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
        let localized = runs.iter().filter(|r| r.status == RunStatus::Localized).count();
        let correct = runs.iter().filter(|r| r.correct_room).count();
        Self {
            runs: runs.len(),
            localized,
            not_localized: runs.len() - localized,
            correct_room: correct,
            correct_rate: if runs.is_empty() { 0.0 } else { correct as f64 / runs.len() as f64 },
            ate_rmse: Stats::of(&pick(|r| r.ate_rmse)),
            convergence_time: Stats::of(&pick(|r| r.convergence_time)),
            map_rmse: Stats::of(&pick(|r| r.map_rmse)),
            association_evaluations: runs.iter().map(|r| r.association_evaluations).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub topo: bool,
    pub selector: String,
    pub particles: usize,
    pub timeout: f64,
    pub seeds: Vec<u64>,
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
    /// Wall segments `[x0, y0, x1, y1]` of the storey, for plotting.
    pub walls: Vec<[f64; 4]>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }
}

/// One seed through the whole pipeline.
pub fn run_single(bench: &Bench, scene: &Scene, seed: u64) -> Result<RunRecord> {
    let sim = simulate(&scene.world, &scene.trajectory, &bench.noise, &bench.sensor, seed, false)?;
    let params = bench.mcl_params();
    let outcome = run_mcl(&scene.prior, &sim.frames, &params, seed, Some(bench.timeout))?;
    let mut record = RunRecord {
        seed,
        status: RunStatus::NotLocalized,
        convergence_time: None,
        converged_room: None,
        true_room: None,
        correct_room: false,
        position_error: None,
        ate_rmse: None,
        map_rmse: None,
        walls_associated: None,
        walls_unassociated: None,
        duplicate_walls: None,
        keyframes: 0,
        mcl_steps: outcome.steps,
        association_evaluations: outcome.evaluations,
        reinitializations: outcome.reinitializations,
        trajectory: Vec::new(),
        particles: outcome.particles,
    };
    let Some(conv) = outcome.converged else {
        return Ok(record);
    };
    let truth = &scene.trajectory[conv.frame].pose;
    let error = (conv.pose.t - truth.t).xy().norm();
    record.status = RunStatus::Localized;
    record.convergence_time = Some(conv.elapsed);
    record.converged_room = conv.room;
    record.true_room = scene
        .prior
        .room_at(&truth.t.xy())
        .map(|r| scene.prior.rooms[r].id.clone());
    record.position_error = Some(error);
    record.correct_room = error < CORRECT_RADIUS;

    let graph = run_sgraph(&scene.prior, &sim.frames[conv.frame..], conv.t_wo, &bench.sgraph)?;
    let est: Vec<TimedPose> = graph
        .keyframes()
        .iter()
        .map(|k| TimedPose { t: k.t, pose: k.pose })
        .collect();
    record.keyframes = est.len();
    record.ate_rmse = ate(&est, &scene.trajectory).ok();
    match map_rmse(&graph) {
        Ok(m) => {
            record.map_rmse = Some(m.rmse);
            record.walls_associated = Some(m.associated);
            record.walls_unassociated = Some(m.unassociated);
        }
        Err(Error::NoAssociatedWalls { unassociated }) => {
            record.walls_associated = Some(0);
            record.walls_unassociated = Some(unassociated);
        }
        Err(e) => return Err(e),
    }
    record.duplicate_walls = Some(graph.duplicate_wall_count());
    // keyframe frames are a subset of the log, so each has an exact ground-truth twin
    let gt_at = |t: f64| {
        let i = scene.trajectory.partition_point(|g| g.t < t - 1e-9);
        scene.trajectory[i.min(scene.trajectory.len() - 1)].pose.t
    };
    record.trajectory = est
        .iter()
        .map(|e| {
            let g = gt_at(e.t);
            [e.t, g.x, g.y, e.pose.t.x, e.pose.t.y]
        })
        .collect();
    Ok(record)
}

/// Every seed of the config, in parallel, reported in seed order.
pub fn run_benchmark(bench: &Bench) -> Result<BenchmarkReport> {
    bench.validate()?;
    let scene = Scene::new(bench)?;
    let mut runs = bench
        .seeds
        .par_iter()
        .map(|&s| run_single(bench, &scene, s))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.seed);
    Ok(report_of(bench, &scene, runs))
}

pub fn report_of(bench: &Bench, scene: &Scene, runs: Vec<RunRecord>) -> BenchmarkReport {
    let params = bench.mcl_params();
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.dedup();
    BenchmarkReport {
        topo: bench.topo,
        selector: selector_name(bench.topo).to_string(),
        particles: params.particles,
        timeout: bench.timeout,
        seeds,
        summary: Summary::of(&runs),
        runs,
        walls: scene
            .world
            .faces
            .iter()
            .map(|f| {
                let end = f.origin + f.along * f.length;
                [f.origin.x, f.origin.y, end.x, end.y]
            })
            .collect(),
    }
}
