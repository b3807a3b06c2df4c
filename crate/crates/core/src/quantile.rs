//! Quantile transform: maps each latent dimension through its empirical CDF
//! so that descriptors spread uniformly over `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_QUANTILES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransform {
    n_quantiles: usize,
    /// `landmarks[k][q]` is the empirical quantile of dimension `k` at
    /// probability level `q / (n_quantiles - 1)`.
    landmarks: Vec<Vec<f64>>,
}

/// Empirical quantile of sorted data at `level` with linear interpolation
/// between order statistics.
fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

impl QuantileTransform {
    /// Fit on row-major samples (one latent vector per entry). When fewer
    /// samples than `n_quantiles` are available the number of landmarks is
    /// lowered to the sample count.
    pub fn fit(samples: &[Vec<f64>], n_quantiles: usize) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::NotEnoughSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        let dims = samples[0].len();
        if let Some(bad) = samples.iter().find(|s| s.len() != dims) {
            return Err(Error::Structural(format!(
                "latent of {} dims among {dims}-dim samples",
                bad.len()
            )));
        }
        let n_quantiles = n_quantiles.clamp(2, samples.len());
        let landmarks = (0..dims)
            .map(|k| {
                let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
                col.sort_by(f64::total_cmp);
                (0..n_quantiles)
                    .map(|q| quantile_sorted(&col, q as f64 / (n_quantiles - 1) as f64))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_quantiles,
            landmarks,
        })
    }

    pub fn n_quantiles(&self) -> usize {
        self.n_quantiles
    }

    pub fn dims(&self) -> usize {
        self.landmarks.len()
    }

    pub fn landmarks(&self, dim: usize) -> &[f64] {
        &self.landmarks[dim]
    }

    /// Map one component through the piecewise-linear CDF of dimension `dim`.
    ///
    /// Values outside the landmark range clamp to 0 or 1. A value equal to a
    /// run of repeated landmarks maps to the middle of that run's levels, and
    /// a fully collapsed dimension maps everything to 0.5.
    pub fn transform_component(&self, dim: usize, x: f64) -> f64 {
        let lm = &self.landmarks[dim];
        let n = lm.len();
        if lm[0] == lm[n - 1] {
            return 0.5;
        }
        let below = lm.partition_point(|&v| v < x);
        let at_or_below = lm.partition_point(|&v| v <= x);
        let top = (n - 1) as f64;
        if at_or_below > below {
            return ((below + at_or_below - 1) as f64 / 2.0) / top;
        }
        if below == 0 {
            return 0.0;
        }
        if below == n {
            return 1.0;
        }
        let (a, b) = (lm[below - 1], lm[below]);
        let level = (below - 1) as f64 + (x - a) / (b - a);
        (level / top).clamp(0.0, 1.0)
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dims() {
            return Err(Error::Structural(format!(
                "latent has {} dims, transform expects {}",
                z.len(),
                self.dims()
            )));
        }
        Ok(z.iter()
            .enumerate()
            .map(|(k, &v)| self.transform_component(k, v))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = (x - i as f64 / n).abs();
                let hi = ((i + 1) as f64 / n - x).abs();
                lo.max(hi)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_point_fit() {
        let qt = QuantileTransform::fit(&[vec![0.0], vec![1.0]], 2).unwrap();
        assert_eq!(qt.landmarks(0), &[0.0, 1.0]);
        assert_eq!(qt.apply(&[0.25]).unwrap(), vec![0.25]);
    }

    #[test]
    fn constant_samples_map_to_half() {
        let samples = vec![vec![0.3, 1.0]; 10];
        let qt = QuantileTransform::fit(&samples, 5).unwrap();
        assert!(qt.landmarks(0).iter().all(|&v| v == 0.3));
        for x in [-1.0, 0.3, 7.0] {
            assert_eq!(qt.apply(&[x, x]).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(QuantileTransform::fit(&[vec![1.0]], 10).is_err());
    }

    #[test]
    fn n_quantiles_lowered_to_sample_count() {
        let samples: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        assert_eq!(QuantileTransform::fit(&samples, 1000).unwrap().n_quantiles(), 7);
    }

    #[test]
    fn median_and_clamping() {
        let samples: Vec<Vec<f64>> = (0..101).map(|i| vec![(i as f64).powi(3)]).collect();
        let qt = QuantileTransform::fit(&samples, 101).unwrap();
        assert_eq!(qt.apply(&[50f64.powi(3)]).unwrap(), vec![0.5]);
        assert_eq!(qt.apply(&[-1.0]).unwrap(), vec![0.0]);
        assert_eq!(qt.apply(&[1e9]).unwrap(), vec![1.0]);
    }

    #[test]
    fn uniformizes_normal_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let qt = QuantileTransform::fit(&samples, 1000).unwrap();
        for k in 0..2 {
            let xs = samples.iter().map(|s| qt.apply(s).unwrap()[k]).collect();
            assert!(ks_uniform(xs) <= 0.02);
        }
    }

    /// Brute-force empirical CDF over the raw training sample.
    #[test]
    fn agrees_with_raw_empirical_cdf() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<Vec<f64>> = (0..5000)
            .map(|_| vec![StandardNormal.sample(&mut rng)])
            .collect();
        let n_q = 200;
        let qt = QuantileTransform::fit(&samples, n_q).unwrap();
        for i in 0..500 {
            let z = -3.5 + 7.0 * i as f64 / 499.0;
            let ecdf = samples.iter().filter(|s| s[0] <= z).count() as f64 / samples.len() as f64;
            let got = qt.apply(&[z]).unwrap()[0];
            assert!((got - ecdf).abs() <= 1.0 / n_q as f64, "z={z} got={got} ecdf={ecdf}");
        }
    }

    #[test]
    fn uniformization_raises_grid_coverage() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let raw: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().map(|&v| sigmoid(v)).collect()).collect();
        let qt = QuantileTransform::fit(&raw, 1000).unwrap();
        let occupied = |pts: &[Vec<f64>]| {
            let mut cells = std::collections::HashSet::new();
            for p in pts {
                let b = crate::container::bin_index(p, &[25, 25], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
                cells.insert(b);
            }
            cells.len()
        };
        let transformed: Vec<Vec<f64>> = raw.iter().map(|p| qt.apply(p).unwrap()).collect();
        assert!(occupied(&transformed) > occupied(&raw));
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<Vec<f64>> = (0..50).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
            let qt = QuantileTransform::fit(&samples, 20).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (tl, th) = (qt.apply(&[lo]).unwrap()[0], qt.apply(&[hi]).unwrap()[0]);
            prop_assert!(tl <= th);
            prop_assert!((0.0..=1.0).contains(&tl) && (0.0..=1.0).contains(&th));
        }
    }
}
