//! Variation and selection operators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::GridContainer;
use crate::error::{Error, Result};
use crate::types::Genome;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationConfig {
    /// Per-gene mutation probability.
    pub p_mut: f64,
    /// Crowding degree of the polynomial distribution.
    pub eta: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self { p_mut: 0.1, eta: 20.0 }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_mut) || !(self.eta > 0.0) {
            return Err(Error::Config(format!(
                "mutation needs p_mut in [0, 1] and eta > 0, got {} and {}",
                self.p_mut, self.eta
            )));
        }
        Ok(())
    }
}

/// Bounded polynomial mutation of a single gene.
pub fn polynomial_gene<R: Rng + ?Sized>(x: f64, lo: f64, hi: f64, eta: f64, rng: &mut R) -> f64 {
    let span = hi - lo;
    let d1 = (x - lo) / span;
    let d2 = (hi - x) / span;
    let u: f64 = rng.random();
    let pow = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let xy = 1.0 - d1;
        let val = 2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0);
        val.powf(pow) - 1.0
    } else {
        let xy = 1.0 - d2;
        let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0);
        1.0 - val.powf(pow)
    };
    (x + dq * span).clamp(lo, hi)
}

pub fn mutate_polynomial<R: Rng + ?Sized>(
    genome: &Genome,
    cfg: &MutationConfig,
    bounds: (f64, f64),
    rng: &mut R,
) -> Genome {
    let (lo, hi) = bounds;
    Genome(
        genome
            .values()
            .iter()
            .map(|&x| {
                if rng.random::<f64>() < cfg.p_mut {
                    polynomial_gene(x, lo, hi, cfg.eta, rng)
                } else {
                    x
                }
            })
            .collect(),
    )
}

pub fn uniform_genome<R: Rng + ?Sized>(dim: usize, (lo, hi): (f64, f64), rng: &mut R) -> Genome {
    Genome((0..dim).map(|_| rng.random_range(lo..=hi)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuriosityConfig {
    pub success: f64,
    pub failure: f64,
    pub floor: f64,
}

impl Default for CuriosityConfig {
    fn default() -> Self {
        Self {
            success: 1.0,
            failure: -0.5,
            floor: 0.01,
        }
    }
}

impl CuriosityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) {
            return Err(Error::Config("curiosity floor must be positive".into()));
        }
        Ok(())
    }

    pub fn updated(&self, score: f64, success: bool) -> f64 {
        let delta = if success { self.success } else { self.failure };
        (score + delta).max(self.floor)
    }
}

/// Score-proportionate choice among the elites of `container`; returns the
/// flat cell index of the chosen elite.
pub fn select_curiosity_roulette<R: Rng + ?Sized>(
    container: &GridContainer,
    floor: f64,
    rng: &mut R,
) -> Result<usize> {
    let total: f64 = container.solutions().map(|s| s.curiosity.max(floor)).sum();
    if container.is_empty() {
        return Err(Error::EmptyContainer(container.id()));
    }
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (flat, s) in container.iter() {
        let w = s.curiosity.max(floor);
        if target < w {
            return Ok(flat);
        }
        target -= w;
        last = flat;
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Evaluation, ObservationMatrix, Solution, SolutionId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// CDF of the perturbation `δ` (in units of the range) for a gene at the
    /// midpoint, obtained by inverting the sampling formula.
    fn midpoint_cdf(d: f64, eta: f64) -> f64 {
        let c = 0.5f64.powf(eta + 1.0);
        if d < 0.0 {
            (((1.0 + d).powf(eta + 1.0) - c) / (2.0 * (1.0 - c))).max(0.0)
        } else {
            ((2.0 - c - (1.0 - d).powf(eta + 1.0)) / (2.0 * (1.0 - c))).min(1.0)
        }
    }

    #[test]
    fn zero_probability_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Genome(vec![0.3, -0.7, 1.0]);
        let cfg = MutationConfig { p_mut: 0.0, eta: 20.0 };
        assert_eq!(mutate_polynomial(&g, &cfg, (-1.0, 1.0), &mut rng), g);
    }

    #[test]
    fn midpoint_perturbation_matches_analytic_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut deltas: Vec<f64> = (0..n)
            .map(|_| polynomial_gene(0.0, -1.0, 1.0, 20.0, &mut rng) / 2.0)
            .collect();
        deltas.sort_by(f64::total_cmp);
        let ks = deltas
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let f = midpoint_cdf(d, 20.0);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn bounds_hold_at_the_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a = polynomial_gene(-1.0, -1.0, 1.0, 20.0, &mut rng);
            let b = polynomial_gene(1.0, -1.0, 1.0, 20.0, &mut rng);
            assert!((-1.0..=1.0).contains(&a) && (-1.0..=1.0).contains(&b));
        }
    }

    fn container(scores: &[f64]) -> GridContainer {
        let mut c = GridContainer::unit(0, vec![scores.len()]).unwrap();
        for (i, &score) in scores.iter().enumerate() {
            let mut s = Solution::new(
                SolutionId(i as u64),
                Genome(vec![]),
                Evaluation {
                    fitness: 0.0,
                    observations: ObservationMatrix::zeros(1, 1),
                    episode_count: 1,
                    unstable_episodes: 0,
                },
            );
            s.curiosity = score;
            s.descriptors.insert(0, vec![(i as f64 + 0.5) / scores.len() as f64]);
            c.add(s).unwrap();
        }
        c
    }

    #[test]
    fn single_elite_always_chosen() {
        let c = container(&[0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..100).all(|_| select_curiosity_roulette(&c, 0.01, &mut rng).unwrap() == 0));
    }

    #[test]
    fn three_to_one_ratio() {
        let c = container(&[3.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let first = (0..n)
            .filter(|_| select_curiosity_roulette(&c, 0.01, &mut rng).unwrap() == 0)
            .count();
        assert!((first as f64 / n as f64 - 0.75).abs() < 0.02 * 0.75);
    }

    #[test]
    fn equal_scores_pass_chi_square() {
        let k = 8;
        let c = container(&vec![1.0; k]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            counts[select_curiosity_roulette(&c, 0.01, &mut rng).unwrap()] += 1;
        }
        let expected = n as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn empty_container_is_an_error() {
        let c = GridContainer::unit(3, vec![2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            select_curiosity_roulette(&c, 0.01, &mut rng),
            Err(Error::EmptyContainer(3))
        ));
    }

    #[test]
    fn curiosity_floor() {
        let cfg = CuriosityConfig::default();
        assert_eq!(cfg.updated(1.0, true), 2.0);
        assert_eq!(cfg.updated(1.0, false), 0.5);
        assert_eq!(cfg.updated(0.2, false), 0.01);
    }
}
