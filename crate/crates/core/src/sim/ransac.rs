use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::geometry::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub dist_thresh: f64,
    pub min_inliers: usize,
    pub max_planes: usize,
    pub iterations: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            dist_thresh: 0.05,
            min_inliers: 100,
            max_planes: 8,
            iterations: 300,
        }
    }
}

/// Least-squares plane through `points` (smallest-eigenvalue direction of the scatter).
pub fn fit_plane(points: &[Vector3<f64>]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let q = p - c;
        scatter += q * q.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let normal = eig.eigenvectors.column(k).into_owned();
    Plane::from_unnormalized(normal, -normal.dot(&c)).ok()
}

fn plane_from_three(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Plane> {
    let n = (b - a).cross(&(c - a));
    if n.norm() < 1e-9 {
        return None;
    }
    Plane::from_unnormalized(n, -n.dot(a)).ok()
}

/// Orients a sensor-frame plane so the sensor origin lies on its negative side.
fn face_away_from_origin(p: Plane) -> Plane {
    if p.d > 0.0 {
        p.flipped()
    } else {
        p
    }
}

/// Sequential RANSAC: repeatedly finds the best-supported plane, refits it
/// on its inliers and removes them.
pub fn extract_planes_ransac(
    cloud: &[Vector3<f64>],
    params: &RansacParams,
    rng: &mut dyn RngCore,
) -> Vec<Plane> {
    let mut remaining: Vec<Vector3<f64>> = cloud.to_vec();
    let mut planes = Vec::new();
    while planes.len() < params.max_planes && remaining.len() >= params.min_inliers.max(3) {
        let mut best: Option<(Plane, usize)> = None;
        for _ in 0..params.iterations {
            let i = rng.random_range(0..remaining.len());
            let j = rng.random_range(0..remaining.len());
            let k = rng.random_range(0..remaining.len());
            if i == j || j == k || i == k {
                continue;
            }
            let Some(h) = plane_from_three(&remaining[i], &remaining[j], &remaining[k]) else {
                continue;
            };
            let support = remaining
                .iter()
                .filter(|p| h.signed_distance(p).abs() <= params.dist_thresh)
                .count();
            if best.is_none_or(|(_, s)| support > s) {
                best = Some((h, support));
            }
        }
        let Some((hypothesis, support)) = best else {
            break;
        };
        if support < params.min_inliers {
            break;
        }
        let (inliers, outliers): (Vec<_>, Vec<_>) = remaining
            .iter()
            .partition(|p| hypothesis.signed_distance(p).abs() <= params.dist_thresh);
        let Some(refined) = fit_plane(&inliers) else {
            break;
        };
        // keep whatever the refit sees as outliers for later rounds
        let (inliers, rejected): (Vec<_>, Vec<_>) = inliers
            .into_iter()
            .partition(|p| refined.signed_distance(p).abs() <= params.dist_thresh);
        if inliers.len() < params.min_inliers {
            break;
        }
        planes.push(face_away_from_origin(fit_plane(&inliers).unwrap_or(refined)));
        remaining = outliers.into_iter().chain(rejected).collect();
    }
    planes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::StandardNormal;

    fn wall_points(plane: &Plane, origin: Vector3<f64>, along: Vector3<f64>, n: usize, sigma: f64, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = stream(seed, 0, 0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..4.0);
                let z: f64 = rng.random_range(0.0..2.5);
                let e: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                origin + along * u + Vector3::z() * z + plane.n * e
            })
            .collect()
    }

    #[test]
    fn fit_recovers_exact_plane() {
        let p = Plane::new(Vector3::new(0.6, 0.8, 0.0), -2.0).unwrap();
        let along = Vector3::new(-0.8, 0.6, 0.0);
        let pts = wall_points(&p, p.n * 2.0, along, 50, 0.0, 1);
        let f = fit_plane(&pts).unwrap();
        let f = if f.n.dot(&p.n) < 0.0 { f.flipped() } else { f };
        assert!((f.n - p.n).norm() < 1e-9);
        assert!((f.d - p.d).abs() < 1e-9);
    }

    #[test]
    fn noise_only_cloud_gives_nothing() {
        let mut rng = stream(2, 0, 0);
        let cloud: Vec<Vector3<f64>> = (0..50)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()) * 10.0)
            .collect();
        let params = RansacParams {
            min_inliers: 100,
            ..RansacParams::default()
        };
        assert!(extract_planes_ransac(&cloud, &params, &mut stream(3, 0, 0)).is_empty());
    }

    #[test]
    fn deterministic_and_oriented() {
        let a = Plane::new(Vector3::new(1.0, 0.0, 0.0), -3.0).unwrap();
        let b = Plane::new(Vector3::new(0.0, -1.0, 0.0), -2.0).unwrap();
        let mut cloud = wall_points(&a, Vector3::new(3.0, -2.0, 0.0), Vector3::y(), 400, 0.01, 4);
        cloud.extend(wall_points(&b, Vector3::new(-1.0, -2.0, 0.0), Vector3::x(), 400, 0.01, 5));
        let params = RansacParams::default();
        let first = extract_planes_ransac(&cloud, &params, &mut stream(9, 0, 0));
        let again = extract_planes_ransac(&cloud, &params, &mut stream(9, 0, 0));
        assert_eq!(first, again);
        assert_eq!(first.len(), 2);
        assert!(first.iter().all(|p| p.d <= 0.0));
    }
}
