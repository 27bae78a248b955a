//! Property checks shared by the property suites and the acceptance run.
//!
//! Every check returns `Err` with a description of the first failing case.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

use planloc::bench::{ate, run_benchmark, Bench};
use planloc::fixtures;
use planloc::geometry::{transform_plane, Plane, Pose3};
use planloc::mcl::{
    init_particles, resample, resamplers, run_mcl, selectors, update_weights, LandmarkTable, MclParams,
    WeightParams, WeightStatus,
};
use planloc::plan::{build_prior_layers, duplicate_wall, PriorGraph};
use planloc::rng::stream;
use planloc::sgraph::{SGraph, SgraphParams};
use planloc::sim::{
    extract_planes_ransac, observe_planes, simulate, NoiseConfig, RansacParams, SensorConfig, TimedPose, World,
};

pub type Check = Result<(), String>;

/// Runs `test` over `cases` inputs from a fixed-seed generator.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Check
where
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn unit(az: f64, el: f64) -> Vector3<f64> {
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

fn plane_strategy() -> impl Strategy<Value = Plane> {
    // stay clear of the poles where the azimuth is undefined, and of the origin
    (-PI..PI, -1.4f64..1.4, 0.05f64..20.0, any::<bool>()).prop_map(|(az, el, d, neg)| Plane {
        n: unit(az, el),
        d: if neg { -d } else { d },
    })
}

fn pose_strategy() -> impl Strategy<Value = Pose3> {
    (
        prop::array::uniform3(-20.0f64..20.0),
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..PI,
    )
        .prop_map(|(t, axis, angle)| {
            let axis = Vector3::from(axis);
            let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis.normalize() };
            Pose3::new(Vector3::from(t), UnitQuaternion::from_scaled_axis(axis * angle))
        })
}

fn planes_close(a: &Plane, b: &Plane, tol: f64) -> bool {
    (a.n - b.n).norm() <= tol && close(a.d, b.d, tol)
}

/// Minimal and closest-point forms both give back the plane they came from.
pub fn plane_round_trips() -> Check {
    check(512, plane_strategy(), |p| {
        let back = p.to_minimal().to_plane();
        prop_assert!(planes_close(&p, &back, 1e-9), "minimal: {p:?} -> {back:?}");
        let cp = p.to_cp().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = cp.to_plane_with_side(p.cp_side_flipped()).unwrap();
        prop_assert!(planes_close(&p, &back, 1e-9), "cp: {p:?} -> {back:?}");
        prop_assert!(planes_close(&p, &p.flipped().flipped(), 0.0));
        Ok(())
    })
}

/// Mapping a plane agrees with mapping its points, composes, and inverts.
pub fn transform_consistency() -> Check {
    let s = (pose_strategy(), pose_strategy(), plane_strategy(), -5.0f64..5.0, -5.0f64..5.0);
    check(512, s, |(a, b, p, u, v)| {
        // a point of p, in its own frame
        let e1 = p.n.cross(&Vector3::x()).try_normalize(1e-6).unwrap_or_else(|| p.n.cross(&Vector3::y()).normalize());
        let e2 = p.n.cross(&e1);
        let x = -p.d * p.n + e1 * u + e2 * v;
        let mapped = transform_plane(&a, &p);
        prop_assert!(mapped.signed_distance(&a.transform_point(&x)).abs() <= 1e-9);
        prop_assert!(close(mapped.n.norm(), 1.0, 1e-12));

        let back = transform_plane(&a.inverse(), &mapped);
        prop_assert!(planes_close(&p, &back, 1e-9), "inverse: {p:?} -> {back:?}");

        let chained = transform_plane(&a, &transform_plane(&b, &p));
        let direct = transform_plane(&a.compose(&b), &p);
        prop_assert!(planes_close(&chained, &direct, 1e-9), "compose: {chained:?} vs {direct:?}");
        Ok(())
    })
}

/// The duplicated face is opposed, one thickness away, and duplicating twice is the identity.
pub fn duplicate_invariants() -> Check {
    check(512, (plane_strategy(), 0.0f64..1.0), |(p, t)| {
        let dup = duplicate_wall(&p, t);
        prop_assert!((dup.n + p.n).norm() <= 1e-12);
        prop_assert!(close(dup.d + p.d, t, 1e-12));
        let on_front = -p.d * p.n;
        prop_assert!(dup.signed_distance(&(on_front + t * p.n)).abs() <= 1e-9);
        prop_assert!(planes_close(&duplicate_wall(&dup, t), &p, 1e-12));
        Ok(())
    })
}

fn three_rooms() -> (World, PriorGraph) {
    let plan = fixtures::three_rooms();
    let storey = &plan.storeys[0];
    let prior = build_prior_layers(storey).unwrap();
    (World::from_storey(storey, &prior), prior)
}

/// Zero-noise planes mapped through the pose that saw them are the prior faces.
pub fn observation_soundness() -> Check {
    let (world, _) = three_rooms();
    check(256, (0.2f64..14.8, 0.2f64..7.8, -PI..PI), |(x, y, yaw)| {
        let pose = Pose3::from_xyz_yaw(x, y, 0.0, yaw);
        let mut rng = stream(0, 0, 0);
        let obs = observe_planes(&world, &pose, 15.0, &NoiseConfig::zero(), &mut rng);
        let faces = world.visible_faces(&pose, 15.0);
        prop_assert_eq!(obs.len(), faces.len());
        for (o, &k) in obs.iter().zip(&faces) {
            let mapped = transform_plane(&pose, o);
            prop_assert!(planes_close(&mapped, &world.faces[k].plane, 1e-9));
        }
        Ok(())
    })
}

/// Weights stay a distribution and the particle count never changes.
pub fn weight_normalization() -> Check {
    let (world, prior) = three_rooms();
    let table = LandmarkTable::new(&prior);
    let s = (1usize..400, any::<u64>(), 0.5f64..14.5, 0.5f64..7.5, -PI..PI, any::<bool>());
    check(128, s, |(n, seed, x, y, yaw, topo)| {
        let mut set = init_particles(&prior, n, seed).unwrap();
        let selector = selectors().create(if topo { "room" } else { "storey" }).unwrap();
        let pose = Pose3::from_xyz_yaw(x, y, 0.0, yaw);
        let mut rng = stream(seed, 1, 0);
        let obs = observe_planes(&world, &pose, 15.0, &NoiseConfig::default(), &mut rng);
        let wp = WeightParams::default();
        for round in 0..3 {
            let r = update_weights(&mut set, &obs, &table, &wp, selector.as_ref(), round % 2 == 0);
            prop_assert_eq!(set.len(), n);
            prop_assert!(set.particles.iter().all(|p| p.weight >= 0.0 && p.weight.is_finite()));
            prop_assert!(close(set.weight_sum(), 1.0, 1e-9), "sum {}", set.weight_sum());
            if r.status == WeightStatus::Reinitialize {
                prop_assert!(set.particles.iter().all(|p| p.weight == 1.0 / n as f64));
            }
            for name in ["systematic", "multinomial"] {
                let mut copy = set.clone();
                let res = resamplers().create(name).unwrap();
                if resample(&mut copy, res.as_ref(), 1.0 + 1e-9) {
                    prop_assert_eq!(copy.len(), n);
                    prop_assert!(copy.particles.iter().all(|p| p.weight == 1.0 / n as f64));
                }
            }
        }
        Ok(())
    })
}

/// With all mass on one particle, every resampler copies that particle only.
pub fn resampling_one_weight() -> Check {
    check(256, (1usize..300, any::<u64>(), any::<prop::sample::Index>()), |(n, seed, k)| {
        let k = k.index(n);
        let mut w = vec![0.0; n];
        w[k] = 1.0;
        for name in resamplers().names() {
            let r = resamplers().create(name).unwrap();
            let idx = r.draw(&w, &mut stream(seed, 0, 0));
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.iter().all(|&i| i == k), "{}: {:?}", name, idx);
        }
        Ok(())
    })
}

/// Ancestor frequencies match the weights: a χ² test at 0.1% for each resampler.
pub fn resampling_distribution() -> Check {
    let w = [0.1, 0.2, 0.3, 0.4];
    // 3 degrees of freedom, upper 0.1% point
    let critical = 16.27;
    for name in resamplers().names() {
        let r = resamplers().create(name).unwrap();
        let rounds = 20_000u64;
        let mut counts = [0usize; 4];
        for i in 0..rounds {
            for a in r.draw(&w, &mut stream(7, 99, i)) {
                counts[a] += 1;
            }
        }
        let total = (rounds as usize * w.len()) as f64;
        let chi2: f64 = counts
            .iter()
            .zip(&w)
            .map(|(&c, &p)| (c as f64 - total * p).powi(2) / (total * p))
            .sum();
        if chi2 > critical {
            return Err(format!("{name}: counts {counts:?}, chi2 {chi2:.2}"));
        }
    }
    Ok(())
}

/// A graph with keyframes off their true poses, an unplanned partition
/// and a room factor, so every factor kind and node kind is present.
fn perturbed_graph(v: &[f64]) -> SGraph {
    let plan = fixtures::single_room();
    let storey = &plan.storeys[0];
    let prior = build_prior_layers(storey).unwrap();
    let world = World::from_storey(storey, &prior);
    let mut g = SGraph::init_graph(&prior, Pose3::identity(), SgraphParams::default()).unwrap();
    let partition = Plane::new(Vector3::new(1.0, 0.0, 0.0), -3.8).unwrap();
    for k in 0..3 {
        let i = 4 * k;
        let truth = Pose3::from_xyz_yaw(1.0 + k as f64, 1.2 + 0.4 * k as f64, 0.0, 0.4 * k as f64 + v[i]);
        let inv = truth.inverse();
        let mut obs: Vec<Plane> = world
            .visible_faces(&truth, 15.0)
            .into_iter()
            .map(|f| transform_plane(&inv, &world.faces[f].plane))
            .collect();
        obs.push(transform_plane(&inv, &partition));
        let tilt = UnitQuaternion::from_scaled_axis(Vector3::new(v[i + 1], v[i + 2], v[i + 3]) * 0.05);
        let odom = Pose3::new(truth.t + Vector3::new(v[i + 1], v[i + 2], v[i + 3]) * 0.2, truth.q * tilt);
        if let Some(c) = g.add_keyframe(k as f64, &odom, &obs).and_then(|kf| g.detect_room(kf)) {
            g.associate_room(&c, 2.0);
        }
    }
    g
}

/// Autodiff Jacobians agree with central differences to 1e-5 relative.
pub fn jacobians_match_finite_differences() -> Check {
    check(64, prop::collection::vec(-1.0f64..1.0, 12), |v| {
        let g = perturbed_graph(&v);
        prop_assert!(!g.factors().is_empty());
        for i in 0..g.factors().len() {
            let (a, n) = g.factor_jacobians(i, 1e-6);
            for (x, y) in a.iter().zip(n.iter()) {
                let scale = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() <= 1e-5 * scale, "factor {}: {} vs {}", i, x, y);
            }
        }
        Ok(())
    })
}

/// Accepted optimizer steps never raise the total cost.
pub fn cost_is_monotone() -> Check {
    check(64, prop::collection::vec(-1.0f64..1.0, 12), |v| {
        let mut g = perturbed_graph(&v);
        let r = g.optimize(30);
        let mut prev = r.initial_cost;
        for &c in &r.costs {
            prop_assert!(c <= prev, "{} after {}", c, prev);
            prev = c;
        }
        prop_assert!(r.final_cost <= r.initial_cost);
        prop_assert!(close(g.total_cost(), r.final_cost, 1e-9 * r.final_cost.max(1.0)));
        Ok(())
    })
}

/// ATE does not depend on the order of the estimated poses.
pub fn ate_ignores_order() -> Check {
    let s = prop::collection::vec((prop::array::uniform2(-10.0f64..10.0), any::<prop::sample::Index>()), 1..60);
    check(256, (s, any::<u64>()), |(est, shuffle)| {
        let gt: Vec<TimedPose> = (0..60)
            .map(|k| TimedPose {
                t: k as f64 * 0.1,
                pose: Pose3::from_xyz_yaw(k as f64 * 0.05, 1.0, 0.0, 0.0),
            })
            .collect();
        let est: Vec<TimedPose> = est
            .iter()
            .map(|(xy, i)| TimedPose {
                t: i.index(60) as f64 * 0.1,
                pose: Pose3::from_xyz_yaw(xy[0], xy[1], 0.0, 0.0),
            })
            .collect();
        let mut shuffled = est.clone();
        let mut rng = stream(shuffle, 0, 0);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = ate(&est, &gt).unwrap();
        let b = ate(&shuffled, &gt).unwrap();
        prop_assert!(close(a, b, 1e-12 * a.max(1.0)), "{} vs {}", a, b);
        Ok(())
    })
}

fn small_bench(seeds: Vec<u64>) -> Bench {
    let mut mcl = MclParams {
        particles: 3000,
        ..MclParams::default()
    };
    mcl.weight.sigma = 0.2;
    Bench {
        plan: fixtures::three_rooms(),
        trajectory: fixtures::three_rooms_path(),
        noise: NoiseConfig::default(),
        sensor: SensorConfig::default(),
        mcl,
        sgraph: SgraphParams::default(),
        seeds,
        topo: true,
        timeout: 30.0,
    }
}

/// Same plan, config and seed give byte-identical outputs, serial or parallel.
pub fn full_runs_are_bit_identical() -> Check {
    let bench = small_bench(vec![3, 11]);
    let a = run_benchmark(&bench).map_err(|e| e.to_string())?.to_json();
    let b = run_benchmark(&bench).map_err(|e| e.to_string())?.to_json();
    if a != b {
        return Err("benchmark reports differ".into());
    }
    let scene = planloc::bench::Scene::new(&bench).map_err(|e| e.to_string())?;
    let sim = simulate(&scene.world, &scene.trajectory, &bench.noise, &bench.sensor, 5, false)
        .map_err(|e| e.to_string())?;
    let mut serial = bench.mcl_params();
    serial.parallel = false;
    let mut parallel = serial.clone();
    parallel.parallel = true;
    let x = run_mcl(&scene.prior, &sim.frames, &serial, 5, Some(10.0)).map_err(|e| e.to_string())?;
    let y = run_mcl(&scene.prior, &sim.frames, &parallel, 5, Some(10.0)).map_err(|e| e.to_string())?;
    let (x, y) = (serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
    if x != y {
        return Err("serial and parallel filter runs differ".into());
    }
    Ok(())
}

/// Points on the given wall faces, sensor frame, Gaussian noise along each normal.
pub fn wall_cloud(walls: &[(Plane, Vector3<f64>)], per_wall: usize, sigma: f64, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = stream(seed, 0, 0);
    let mut cloud = Vec::new();
    for (p, along) in walls {
        let foot = -p.d * p.n;
        for _ in 0..per_wall {
            let u: f64 = rng.random_range(-2.0..2.0);
            let z: f64 = rng.random_range(-0.5..2.0);
            let e: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            cloud.push(foot + along * u + Vector3::z() * z + p.n * e);
        }
    }
    cloud
}

/// Up to four vertical walls with 300+ inliers each and σ ≤ 0.02 are all
/// recovered, each normal within 2°.
pub fn ransac_recovers_walls() -> Check {
    let s = (1usize..=4, -PI..PI, 300usize..500, 0.0f64..0.02, any::<u64>());
    check(48, s, |(k, yaw, per_wall, sigma, seed)| {
        // walls of a box around the sensor, distances 1.5 to 4 m
        let walls: Vec<(Plane, Vector3<f64>)> = (0..k)
            .map(|i| {
                let a = yaw + i as f64 * PI / 2.0;
                let n = Vector3::new(a.cos(), a.sin(), 0.0);
                let d = 1.5 + 0.8 * i as f64;
                (Plane { n, d: -d }, Vector3::new(-a.sin(), a.cos(), 0.0))
            })
            .collect();
        let cloud = wall_cloud(&walls, per_wall, sigma, seed);
        let params = RansacParams::default();
        let found = extract_planes_ransac(&cloud, &params, &mut stream(seed, 1, 0));
        prop_assert_eq!(found.len(), k);
        for (w, _) in &walls {
            let best = found.iter().map(|f| f.n.angle(&w.n)).fold(f64::INFINITY, f64::min);
            prop_assert!(best < 2f64.to_radians(), "normal off by {}°", best.to_degrees());
        }
        Ok(())
    })
}

/// Two walls, σ = 0.01: recovered in every one of `seeds` seeds with normals
/// within 1° and offsets within 0.03 m. Returns the number of seeds that passed.
pub fn ransac_two_walls(seeds: u64) -> u64 {
    let walls = [
        (
            Plane::new(Vector3::new(1.0, 0.0, 0.0), -3.0).unwrap(),
            Vector3::new(0.0, 1.0, 0.0),
        ),
        (
            Plane::new(Vector3::new(0.0, -1.0, 0.0), -2.0).unwrap(),
            Vector3::new(1.0, 0.0, 0.0),
        ),
    ];
    (0..seeds)
        .filter(|&seed| {
            let cloud = wall_cloud(&walls, 400, 0.01, seed);
            let found = extract_planes_ransac(&cloud, &RansacParams::default(), &mut stream(seed, 1, 0));
            found.len() == 2
                && walls.iter().all(|(w, _)| {
                    found
                        .iter()
                        .any(|f| f.n.angle(&w.n) < 1f64.to_radians() && (f.d - w.d).abs() < 0.03)
                })
        })
        .count() as u64
}
