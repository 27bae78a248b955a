use rand::{Rng, RngCore};

use crate::registry::Registry;

/// Draws `weights.len()` ancestor indices in proportion to `weights`
/// (normalized, non-negative).
pub trait Resampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn draw(&self, weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize>;
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Index of the first bin whose cumulative weight exceeds `u`, never a
/// zero-weight bin even when rounding leaves `u` past the last total.
fn locate(cdf: &[f64], weights: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|&c| c <= u);
    if i < cdf.len() {
        return i;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(cdf.len() - 1)
}

/// Low-variance resampling: one uniform offset, `N` evenly spaced pointers.
pub struct Systematic;

impl Resampler for Systematic {
    fn name(&self) -> &'static str {
        "systematic"
    }

    fn draw(&self, weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize> {
        let n = weights.len();
        if n == 0 {
            return Vec::new();
        }
        let cdf = cumulative(weights);
        let scale = cdf[n - 1];
        let step = scale / n as f64;
        let u0 = rng.random::<f64>() * step;
        (0..n)
            .map(|i| locate(&cdf, weights, u0 + i as f64 * step))
            .collect()
    }
}

/// Independent draws from the categorical distribution.
pub struct Multinomial;

impl Resampler for Multinomial {
    fn name(&self) -> &'static str {
        "multinomial"
    }

    fn draw(&self, weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize> {
        let n = weights.len();
        if n == 0 {
            return Vec::new();
        }
        let cdf = cumulative(weights);
        let scale = cdf[n - 1];
        (0..n)
            .map(|_| locate(&cdf, weights, rng.random::<f64>() * scale))
            .collect()
    }
}

pub fn resamplers() -> Registry<dyn Resampler> {
    let mut r: Registry<dyn Resampler> = Registry::new("resampler");
    r.register("systematic", || Box::new(Systematic));
    r.register("multinomial", || Box::new(Multinomial));
    r
}

/// `1 / Σ wᵢ²` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn both() -> [Box<dyn Resampler>; 2] {
        [Box::new(Systematic), Box::new(Multinomial)]
    }

    #[test]
    fn single_weight_is_copied_everywhere() {
        let mut w = vec![0.0; 50];
        w[17] = 1.0;
        for r in both() {
            let mut rng = stream(3, 0, 0);
            assert!(r.draw(&w, &mut rng).iter().all(|&i| i == 17), "{}", r.name());
        }
    }

    #[test]
    fn zero_weights_never_survive() {
        let w = [0.5, 0.5, 0.0, 0.0];
        for r in both() {
            for seed in 0..200 {
                let mut rng = stream(seed, 0, 0);
                assert!(r.draw(&w, &mut rng).iter().all(|&i| i < 2));
            }
        }
    }

    #[test]
    fn systematic_counts_are_within_one_of_expectation() {
        let n = 1000;
        let mut weights = vec![0.0; n];
        weights[..4].copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        for seed in 0..20 {
            let mut rng = stream(seed, 0, 0);
            let mut counts = [0usize; 4];
            for i in Systematic.draw(&weights, &mut rng) {
                counts[i] += 1;
            }
            for (c, p) in counts.iter().zip(&weights) {
                assert!((*c as f64 - p * n as f64).abs() <= 1.0, "{counts:?}");
            }
        }
    }

    #[test]
    fn effective_sample_size_limits() {
        assert!((effective_sample_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0);
    }
}
