//! Independent reference implementations shared by integration and
//! acceptance tests. Everything here is written with plain scalar loops over
//! public fields so it shares no arithmetic with the library code.
#![allow(dead_code)]

use mcaurora::autoencoder::{Activation, DenseNet, DiversityConfig, DiversityKind, ModularAutoEncoder, Topology};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STD_FLOOR: f64 = 1e-8;

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Elu => {
            if v > 0.0 {
                v
            } else {
                v.exp() - 1.0
            }
        }
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::Linear => v,
    }
}

pub fn net_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for l in &net.layers {
        let mut next = vec![0.0; l.outputs];
        for o in 0..l.outputs {
            let mut s = l.bias[o];
            for i in 0..l.inputs {
                s += cur[i] * l.weights[i * l.outputs + o];
            }
            next[o] = act(l.activation, s);
        }
        cur = next;
    }
    cur
}

/// `(latents, outputs)` indexed `[module][sample][component]`.
pub type Forward = (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>);

pub fn ensemble_forward(ens: &ModularAutoEncoder, x: &Array2<f64>) -> Forward {
    let mut zs = Vec::new();
    let mut ys = Vec::new();
    for m in &ens.modules {
        let mut zm = Vec::new();
        let mut ym = Vec::new();
        for row in x.rows() {
            let z = net_forward(&m.encoder, &row.to_vec());
            ym.push(net_forward(&m.decoder, &z));
            zm.push(z);
        }
        zs.push(zm);
        ys.push(ym);
    }
    (zs, ys)
}

pub fn recons(ys: &[Vec<Vec<f64>>], x: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for ym in ys {
        let mut module = 0.0;
        for (i, y) in ym.iter().enumerate() {
            for (k, v) in y.iter().enumerate() {
                module += (v - x[[i, k]]).powi(2);
            }
        }
        total += module / x.nrows() as f64;
    }
    total / ys.len() as f64
}

pub fn outputs(ys: &[Vec<Vec<f64>>]) -> f64 {
    let m = ys.len();
    let b = ys[0].len();
    let n = ys[0][0].len();
    let mut total = 0.0;
    for i in 0..b {
        for k in 0..n {
            let mean: f64 = (0..m).map(|j| ys[j][i][k]).sum::<f64>() / m as f64;
            for j in 0..m {
                total += (ys[j][i][k] - mean).powi(2);
            }
        }
    }
    total / (b * m) as f64
}

/// Columns of the per-module latents side by side: `[sample][column]`.
pub fn concat(zs: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    (0..zs[0].len())
        .map(|i| zs.iter().flat_map(|zm| zm[i].iter().copied()).collect())
        .collect()
}

pub fn cov_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let b = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / b as f64).collect();
    let mut out = vec![vec![0.0; d]; d];
    for a in 0..d {
        for c in 0..d {
            let mut s = 0.0;
            for r in rows {
                s += (r[a] - mean[a]) * (r[c] - mean[c]);
            }
            out[a][c] = s / (b - 1) as f64;
        }
    }
    out
}

pub fn corr_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let c = cov_matrix(rows);
    let d = c.len();
    let s: Vec<f64> = (0..d).map(|k| c[k][k].max(0.0).sqrt().max(STD_FLOOR)).collect();
    (0..d).map(|a| (0..d).map(|b| c[a][b] / (s[a] * s[b])).collect()).collect()
}

pub fn cov_loss(zs: &[Vec<Vec<f64>>]) -> f64 {
    let c = cov_matrix(&concat(zs));
    let mut total = 0.0;
    for (a, row) in c.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            if a != b {
                total += v.abs();
            }
        }
    }
    total
}

pub fn d_corr(h1: &[Vec<f64>], h2: &[Vec<f64>]) -> f64 {
    let d = h1.len();
    let mut tr = 0.0;
    let mut n1 = 0.0;
    let mut n2 = 0.0;
    for a in 0..d {
        for b in 0..d {
            tr += h1[a][b] * h2[b][a];
            n1 += h1[a][b] * h1[a][b];
            n2 += h2[a][b] * h2[a][b];
        }
    }
    (1.0 - tr / (n1.sqrt() * n2.sqrt())).clamp(0.0, 1.0)
}

pub fn cmd_loss(zs: &[Vec<Vec<f64>>]) -> f64 {
    let rs: Vec<_> = zs.iter().map(|z| corr_matrix(z)).collect();
    let mut total = 0.0;
    for i in 0..rs.len() {
        for j in 0..rs.len() {
            if i != j {
                total += d_corr(&rs[i], &rs[j]);
            }
        }
    }
    total
}

pub fn to_nested(h: &Array2<f64>) -> Vec<Vec<f64>> {
    h.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Small randomly initialised ensemble without dropout.
pub fn toy_ensemble(modules: usize, input: usize, kind: DiversityKind, sign: f64, seed: u64) -> ModularAutoEncoder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = Topology {
        hidden: vec![3],
        latent_dim: 2,
        dropout: 0.0,
    };
    let div = DiversityConfig { kind, sign, lambda: 1.0 };
    ModularAutoEncoder::xavier(input, modules, &topo, div, &mut rng).unwrap()
}

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
}

/// Largest relative error between the analytic gradient and central
/// differences of the combined loss, `|a - f| / (|f| + 1e-8)`.
pub fn gradient_check(ens: &ModularAutoEncoder, x: &Array2<f64>, h: f64) -> f64 {
    let (_, analytic) = ens.loss_and_grad::<ChaCha8Rng>(x, None).unwrap();
    let base = ens.params();
    let mut probe = ens.clone();
    let mut worst: f64 = 0.0;
    for p in 0..base.len() {
        let mut plus = base.clone();
        plus[p] += h;
        probe.set_params(&plus).unwrap();
        let lp = probe.combined_loss(x).unwrap().total;
        let mut minus = base.clone();
        minus[p] -= h;
        probe.set_params(&minus).unwrap();
        let lm = probe.combined_loss(x).unwrap().total;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((analytic[p] - fd).abs() / (fd.abs() + 1e-8));
    }
    worst
}

/// CDF of the bounded polynomial perturbation (in units of the range) for a
/// gene at the midpoint of its bounds.
pub fn polynomial_midpoint_cdf(d: f64, eta: f64) -> f64 {
    let c = 0.5f64.powf(eta + 1.0);
    if d < 0.0 {
        (((1.0 + d).powf(eta + 1.0) - c) / (2.0 * (1.0 - c))).clamp(0.0, 1.0)
    } else {
        ((2.0 - c - (1.0 - d).powf(eta + 1.0)) / (2.0 * (1.0 - c))).clamp(0.0, 1.0)
    }
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub mod checks {
    //! Measurements shared by integration tests and the acceptance run.

    use std::collections::BTreeMap;

    use mcaurora::container::GridContainer;
    use mcaurora::descriptors::{ChannelReduction, HardcodedSpec, Reduction};
    use mcaurora::engine::{mutate_polynomial, polynomial_gene, select_curiosity_roulette, MutationConfig};
    use mcaurora::metrics::{fd_abs_correlation, kl_coverage, KlHistogram, KL_BINS, KL_SMOOTHING};
    use mcaurora::tasks::{Task, ToyTask};
    use mcaurora::{Evaluation, Genome, ObservationMatrix, QuantileTransform, Solution, SolutionId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::{ks_distance, polynomial_midpoint_cdf};

    pub struct QtReport {
        pub max_ks: f64,
        pub monotone: bool,
        pub in_range: bool,
    }

    /// Fit on `n` standard-normal 2-d latents, measure uniformity on the
    /// training set and check monotonicity and range on `probes` points.
    pub fn quantile_uniformity(n: usize, probes: usize, seed: u64) -> QtReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let qt = QuantileTransform::fit(&samples, 1000).unwrap();
        let out: Vec<Vec<f64>> = samples.iter().map(|s| qt.apply(s).unwrap()).collect();
        let max_ks = (0..2)
            .map(|k| ks_distance(out.iter().map(|o| o[k]).collect(), |x| x.clamp(0.0, 1.0)))
            .fold(0.0, f64::max);
        let mut probe: Vec<f64> = (0..probes).map(|_| rng.random_range(-6.0..6.0)).collect();
        probe.sort_by(f64::total_cmp);
        let mut monotone = true;
        let mut in_range = true;
        for k in 0..2 {
            let mapped: Vec<f64> = probe.iter().map(|&z| qt.transform_component(k, z)).collect();
            monotone &= mapped.windows(2).all(|w| w[0] <= w[1]);
            in_range &= mapped.iter().all(|v| (0.0..=1.0).contains(v));
        }
        QtReport { max_ks, monotone, in_range }
    }

    /// KS distance between `n` perturbations of a midpoint gene and the
    /// analytic polynomial CDF.
    pub fn mutation_ks(n: usize, eta: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (-1.0, 1.0);
        let deltas: Vec<f64> = (0..n)
            .map(|_| (polynomial_gene(0.0, lo, hi, eta, &mut rng) - 0.0) / (hi - lo))
            .collect();
        ks_distance(deltas, |d| polynomial_midpoint_cdf(d, eta))
    }

    /// Count of out-of-bounds genes over `n` mutated genomes, parents drawn
    /// anywhere in the box including its faces.
    pub fn mutation_bound_violations(n: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = MutationConfig { p_mut: 1.0, eta: 20.0 };
        let bounds = (-1.0, 1.0);
        let mut bad = 0;
        for i in 0..n {
            let x = match i % 3 {
                0 => bounds.0,
                1 => bounds.1,
                _ => rng.random_range(bounds.0..=bounds.1),
            };
            let child = mutate_polynomial(&Genome(vec![x]), &cfg, bounds, &mut rng);
            bad += child.values().iter().filter(|&&v| !(bounds.0..=bounds.1).contains(&v)).count();
        }
        bad
    }

    fn dummy_solution(id: u64, container: usize, fd: Vec<f64>, fitness: f64) -> Solution {
        let eval = Evaluation {
            fitness,
            observations: ObservationMatrix::zeros(1, 1),
            episode_count: 1,
            unstable_episodes: 0,
        };
        let mut s = Solution::new(SolutionId(id), Genome(vec![0.0]), eval);
        s.descriptors.insert(container, fd);
        s
    }

    /// Largest gap between selection frequency and score proportion over
    /// `draws` picks from a 10-elite container scored 1..=10.
    pub fn roulette_max_deviation(draws: usize, seed: u64) -> f64 {
        let mut c = GridContainer::unit(0, vec![10, 1]).unwrap();
        for i in 0..10u64 {
            let mut s = dummy_solution(i, 0, vec![(i as f64 + 0.5) / 10.0, 0.5], 0.0);
            s.curiosity = (i + 1) as f64;
            c.add(s).unwrap();
        }
        let total: f64 = c.solutions().map(|s| s.curiosity).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(select_curiosity_roulette(&c, 0.01, &mut rng).unwrap()).or_default() += 1;
        }
        c.iter()
            .map(|(flat, s)| {
                let freq = *counts.get(&flat).unwrap_or(&0) as f64 / draws as f64;
                (freq - s.curiosity / total).abs()
            })
            .fold(0.0, f64::max)
    }

    pub struct KlReport {
        pub self_divergence: f64,
        pub hand_error: f64,
        pub forward: f64,
        pub backward: f64,
    }

    /// Identity, hand-computed and asymmetry checks of KL-coverage.
    pub fn kl_identities(seed: u64) -> KlReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..200).map(|_| vec![rng.random(), rng.random()]).collect())
            .collect();
        let self_divergence = kl_coverage(&set, &set, KL_BINS, KlHistogram::Marginal).unwrap();

        // One container, 1-d descriptors: reference uniform over the 10 bins,
        // compared set piled into bin 0.
        let uniform: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64 + 0.5) / 10.0]).collect();
        let piled: Vec<Vec<f64>> = (0..10).map(|_| vec![0.05]).collect();
        let norm_u = 10.0 + 10.0 * KL_SMOOTHING;
        let norm_p = 10.0 + 10.0 * KL_SMOOTHING;
        let p = (1.0 + KL_SMOOTHING) / norm_u;
        let q0 = (10.0 + KL_SMOOTHING) / norm_p;
        let qr = KL_SMOOTHING / norm_p;
        let hand = p * (p / q0).ln() + 9.0 * p * (p / qr).ln();
        let measured = kl_coverage(&[uniform.clone()], &[piled.clone()], KL_BINS, KlHistogram::Marginal).unwrap();
        let backward = kl_coverage(&[piled], &[uniform], KL_BINS, KlHistogram::Marginal).unwrap();
        KlReport {
            self_divergence,
            hand_error: (measured - hand).abs(),
            forward: measured,
            backward,
        }
    }

    /// Mean absolute correlation of the toy task's four mean-reduced
    /// channels over `n` uniform genomes. The closed form is `2√2/6`.
    pub fn toy_channel_correlation(n: usize, seed: u64) -> f64 {
        let task = ToyTask::new();
        let spec = HardcodedSpec {
            name: "toy".into(),
            components: task
                .channels()
                .iter()
                .enumerate()
                .map(|(channel, info)| ChannelReduction {
                    channel,
                    reduction: Reduction::Mean,
                    lo: info.bounds.0,
                    hi: info.bounds.1,
                })
                .collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = task.genome_bounds();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let g = Genome(vec![rng.random_range(lo..hi), rng.random_range(lo..hi)]);
                let e = task.evaluate(&g, i as u64).unwrap();
                spec.extract(&e.observations).unwrap()
            })
            .collect();
        fd_abs_correlation(&rows).unwrap()
    }
}
