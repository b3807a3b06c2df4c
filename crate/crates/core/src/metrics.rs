//! Archive metrics: coverage, QD-score, their unique-solution variants,
//! redundancy across containers, descriptor correlation and KL-coverage.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::container::GridContainer;
use crate::error::{Error, Result};
use crate::types::Solution;

pub fn total_capacity(containers: &[GridContainer]) -> usize {
    containers.iter().map(GridContainer::capacity).sum()
}

fn stored(containers: &[GridContainer]) -> impl Iterator<Item = &Solution> {
    containers.iter().flat_map(GridContainer::solutions)
}

fn normalised(fitness: f64, (lo, hi): (f64, f64)) -> f64 {
    ((fitness - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn percent(count: usize, capacity: usize) -> f64 {
    if capacity == 0 {
        0.0
    } else {
        100.0 * count as f64 / capacity as f64
    }
}

/// Percentage of occupied cells over the summed capacity.
pub fn coverage(containers: &[GridContainer]) -> f64 {
    let occupied = containers.iter().map(GridContainer::len).sum();
    percent(occupied, total_capacity(containers))
}

/// Sum of normalised fitness, counting a solution once per container holding it.
pub fn qd_score(containers: &[GridContainer], fitness_bounds: (f64, f64)) -> f64 {
    stored(containers)
        .map(|s| normalised(s.fitness(), fitness_bounds))
        .sum()
}

/// Unique QD-score and unique coverage, counting each solution id once.
/// Coverage keeps the summed capacity as denominator.
pub fn unique_variants(containers: &[GridContainer], fitness_bounds: (f64, f64)) -> (f64, f64) {
    let mut seen = HashSet::new();
    let mut score = 0.0;
    for s in stored(containers) {
        if seen.insert(s.id) {
            score += normalised(s.fitness(), fitness_bounds);
        }
    }
    (score, percent(seen.len(), total_capacity(containers)))
}

/// Redundant entries over summed capacity, where redundant entries are
/// stored entries beyond the first copy of each solution.
pub fn redundancy(containers: &[GridContainer]) -> f64 {
    let entries: usize = containers.iter().map(GridContainer::len).sum();
    let distinct = stored(containers).map(|s| s.id).collect::<HashSet<_>>().len();
    let capacity = total_capacity(containers);
    if capacity == 0 {
        0.0
    } else {
        (entries - distinct) as f64 / capacity as f64
    }
}

pub fn best_fitness(containers: &[GridContainer]) -> Option<f64> {
    stored(containers).map(Solution::fitness).reduce(f64::max)
}

/// Mean absolute off-diagonal Pearson correlation between the columns of
/// `rows`. Constant columns are left out. `None` when fewer than two rows or
/// fewer than two varying columns remain.
pub fn fd_abs_correlation(rows: &[Vec<f64>]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let means: Vec<f64> = (0..cols)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let centred: Vec<Vec<f64>> = (0..cols)
        .map(|j| rows.iter().map(|r| r[j] - means[j]).collect())
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let live: Vec<usize> = (0..cols).filter(|&j| norms[j] > 0.0).collect();
    if live.len() < cols {
        log::warn!(
            "{} constant descriptor column(s) left out of the correlation",
            cols - live.len()
        );
    }
    if live.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(x, y)| x * y).sum();
            total += (dot / (norms[i] * norms[j])).abs().min(1.0);
            pairs += 1;
        }
    }
    Some(total / pairs as f64)
}

pub const KL_SMOOTHING: f64 = 1e-9;
pub const KL_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlHistogram {
    /// One histogram per descriptor dimension; divergences are summed.
    Marginal,
    /// One histogram over the joint grid of `bins^dims` cells.
    Joint,
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

/// Smoothed, normalised histogram.
pub fn histogram(values: impl Iterator<Item = usize>, cells: usize) -> Vec<f64> {
    let mut counts = vec![KL_SMOOTHING; cells];
    for v in values {
        counts[v] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

fn histograms(fds: &[Vec<f64>], dims: usize, bins: usize, mode: KlHistogram) -> Vec<Vec<f64>> {
    match mode {
        KlHistogram::Marginal => (0..dims)
            .map(|k| histogram(fds.iter().map(|fd| bin_of(fd[k], bins)), bins))
            .collect(),
        KlHistogram::Joint => {
            let cells = bins.pow(dims as u32);
            let flat = fds
                .iter()
                .map(|fd| fd.iter().fold(0, |acc, &v| acc * bins + bin_of(v, bins)));
            vec![histogram(flat, cells)]
        }
    }
}

/// KL-coverage of `compared` against `reference`: per container, the KL
/// divergence from the reference descriptor histogram to the compared one,
/// summed over containers. Index `c` of both slices holds the descriptors of
/// each set under container `c`'s descriptor space.
pub fn kl_coverage(
    reference: &[Vec<Vec<f64>>],
    compared: &[Vec<Vec<f64>>],
    bins: usize,
    mode: KlHistogram,
) -> Result<f64> {
    if reference.len() != compared.len() {
        return Err(Error::Structural(format!(
            "{} reference containers vs {} compared",
            reference.len(),
            compared.len()
        )));
    }
    let mut total = 0.0;
    for (r, c) in reference.iter().zip(compared) {
        if r.is_empty() || c.is_empty() {
            return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
        }
        let dims = r[0].len();
        if r.iter().chain(c).any(|fd| fd.len() != dims) {
            return Err(Error::Structural("descriptor dimensionality differs within a container".into()));
        }
        let hr = histograms(r, dims, bins, mode);
        let hc = histograms(c, dims, bins, mode);
        total += hr.iter().zip(&hc).map(|(e, a)| kl_divergence(e, a)).sum::<f64>();
    }
    Ok(total)
}

/// One row of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub iteration: usize,
    pub evals: u64,
    pub qd_score: f64,
    pub unique_qd_score: f64,
    pub coverage_pct: f64,
    pub unique_coverage_pct: f64,
    pub best_fitness: Option<f64>,
    pub fd_abs_corr: Option<f64>,
    pub redundancy: f64,
    pub depot_size: usize,
}

pub const METRIC_COLUMNS: [&str; 10] = [
    "iteration",
    "evals",
    "qd_score",
    "unique_qd_score",
    "coverage_pct",
    "unique_coverage_pct",
    "best_fitness",
    "fd_abs_corr",
    "redundancy",
    "depot_size",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        parse(s).map(Some)
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Structural(format!("cannot parse metric field '{s}'")))
}

impl MetricSnapshot {
    /// Computes every metric except the descriptor correlation, which needs
    /// the extractors and is passed in.
    pub fn compute(
        iteration: usize,
        evals: u64,
        containers: &[GridContainer],
        fitness_bounds: (f64, f64),
        fd_abs_corr: Option<f64>,
        depot_size: usize,
    ) -> Self {
        let (unique_qd_score, unique_coverage_pct) = unique_variants(containers, fitness_bounds);
        Self {
            iteration,
            evals,
            qd_score: qd_score(containers, fitness_bounds),
            unique_qd_score,
            coverage_pct: coverage(containers),
            unique_coverage_pct,
            best_fitness: best_fitness(containers),
            fd_abs_corr,
            redundancy: redundancy(containers),
            depot_size,
        }
    }

    pub fn csv_header() -> String {
        METRIC_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        [
            self.iteration.to_string(),
            self.evals.to_string(),
            self.qd_score.to_string(),
            self.unique_qd_score.to_string(),
            self.coverage_pct.to_string(),
            self.unique_coverage_pct.to_string(),
            opt(self.best_fitness),
            opt(self.fd_abs_corr),
            self.redundancy.to_string(),
            self.depot_size.to_string(),
        ]
        .join(",")
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != METRIC_COLUMNS.len() {
            return Err(Error::Structural(format!(
                "metric row has {} fields, expected {}",
                f.len(),
                METRIC_COLUMNS.len()
            )));
        }
        Ok(Self {
            iteration: parse(f[0])?,
            evals: parse(f[1])?,
            qd_score: parse(f[2])?,
            unique_qd_score: parse(f[3])?,
            coverage_pct: parse(f[4])?,
            unique_coverage_pct: parse(f[5])?,
            best_fitness: parse_opt(f[6])?,
            fd_abs_corr: parse_opt(f[7])?,
            redundancy: parse(f[8])?,
            depot_size: parse(f[9])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Evaluation, Genome, ObservationMatrix, SolutionId};
    use rand::{Rng, SeedableRng};

    fn sol(id: u64, fitness: f64, container: usize, fd: [f64; 2]) -> Solution {
        let mut s = Solution::new(
            SolutionId(id),
            Genome(vec![0.0]),
            Evaluation {
                fitness,
                observations: ObservationMatrix::zeros(1, 1),
                episode_count: 1,
                unstable_episodes: 0,
            },
        );
        s.descriptors.insert(container, fd.to_vec());
        s
    }

    fn grid(id: usize) -> GridContainer {
        GridContainer::unit(id, vec![10, 10]).unwrap()
    }

    #[test]
    fn empty_archive() {
        let cs = vec![grid(0), grid(1)];
        assert_eq!(coverage(&cs), 0.0);
        assert_eq!(qd_score(&cs, (0.0, 1.0)), 0.0);
        assert_eq!(best_fitness(&cs), None);
        assert_eq!(redundancy(&cs), 0.0);
    }

    #[test]
    fn coverage_counts_cells() {
        let mut c = grid(0);
        for i in 0..37 {
            let fd = [(i % 10) as f64 / 10.0 + 0.01, (i / 10) as f64 / 10.0 + 0.01];
            assert!(c.add(sol(i, 1.0, 0, fd)).unwrap().accepted());
        }
        assert_eq!(coverage(&[c]), 37.0);
    }

    #[test]
    fn full_grid_is_hundred_percent() {
        let mut c = GridContainer::unit(0, vec![2, 2]).unwrap();
        for (i, fd) in [[0.1, 0.1], [0.1, 0.9], [0.9, 0.1], [0.9, 0.9]].iter().enumerate() {
            c.add(sol(i as u64, 0.0, 0, *fd)).unwrap();
        }
        assert_eq!(coverage(&[c]), 100.0);
    }

    #[test]
    fn qd_score_normalises_and_clamps() {
        let mut c = grid(0);
        for i in 0..3 {
            c.add(sol(i, 5.0, 0, [i as f64 / 10.0, 0.0])).unwrap();
        }
        assert_eq!(qd_score(&[c.clone()], (0.0, 10.0)), 1.5);
        let mut d = grid(0);
        for i in 0..10 {
            d.add(sol(i, 99.0, 0, [i as f64 / 10.0, 0.5])).unwrap();
        }
        assert_eq!(qd_score(&[d], (0.0, 10.0)), 10.0);
    }

    #[test]
    fn shared_solution_counts_once_in_unique_metrics() {
        let mut cs: Vec<GridContainer> = (0..4).map(grid).collect();
        for c in &mut cs {
            let mut s = sol(7, 1.0, c.id(), [0.5, 0.5]);
            s.descriptors.insert(c.id(), vec![0.5, 0.5]);
            c.add(s).unwrap();
        }
        let (uq, ucov) = unique_variants(&cs, (0.0, 1.0));
        assert_eq!(coverage(&cs), 1.0);
        assert_eq!(ucov, 0.25);
        assert_eq!(qd_score(&cs, (0.0, 1.0)), 4.0);
        assert_eq!(uq, 1.0);
        assert_eq!(redundancy(&cs), 3.0 / 400.0);
    }

    #[test]
    fn single_container_unique_equals_base() {
        let mut c = grid(0);
        for i in 0..20 {
            c.add(sol(i, i as f64, 0, [i as f64 / 20.0, 0.3])).unwrap();
        }
        let cs = [c];
        let (uq, ucov) = unique_variants(&cs, (0.0, 30.0));
        assert_eq!(uq, qd_score(&cs, (0.0, 30.0)));
        assert_eq!(ucov, coverage(&cs));
        assert_eq!(redundancy(&cs), 0.0);
    }

    #[test]
    fn disjoint_containers_have_no_redundancy() {
        let mut a = grid(0);
        let mut b = grid(1);
        a.add(sol(1, 1.0, 0, [0.1, 0.1])).unwrap();
        b.add(sol(2, 1.0, 1, [0.1, 0.1])).unwrap();
        let cs = [a, b];
        assert_eq!(redundancy(&cs), 0.0);
        assert_eq!(unique_variants(&cs, (0.0, 1.0)), (qd_score(&cs, (0.0, 1.0)), coverage(&cs)));
    }

    #[test]
    fn best_fitness_is_max() {
        let mut c = grid(0);
        c.add(sol(1, 7.0, 0, [0.1, 0.1])).unwrap();
        c.add(sol(2, -3.0, 0, [0.9, 0.1])).unwrap();
        assert_eq!(best_fitness(&[c]), Some(7.0));
    }

    #[test]
    fn correlation_of_copies_is_one() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        assert!((fd_abs_correlation(&rows).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_of_independent_columns_is_small() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        assert!(fd_abs_correlation(&rows).unwrap() < 0.05);
    }

    #[test]
    fn constant_columns_are_excluded() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 3.0, -(i as f64)]).collect();
        assert!((fd_abs_correlation(&rows).unwrap() - 1.0).abs() < 1e-15);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 3.0]).collect();
        assert_eq!(fd_abs_correlation(&rows), None);
        assert_eq!(fd_abs_correlation(&[vec![1.0, 2.0]]), None);
    }

    #[test]
    fn kl_of_identical_sets_is_zero() {
        let fds: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0, (i * 7 % 50) as f64 / 50.0]).collect();
        let set = vec![fds.clone(), fds];
        for mode in [KlHistogram::Marginal, KlHistogram::Joint] {
            assert!(kl_coverage(&set, &set, KL_BINS, mode).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn kl_is_asymmetric() {
        let spread: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0 + 0.05]).collect();
        let mut half = spread[..5].to_vec();
        half.extend(vec![vec![0.05]; 5]);
        let a = kl_coverage(&[spread.clone()], &[half.clone()], KL_BINS, KlHistogram::Marginal).unwrap();
        let b = kl_coverage(&[half], &[spread], KL_BINS, KlHistogram::Marginal).unwrap();
        assert!((a - b).abs() > 1e-3, "{a} {b}");
    }

    #[test]
    fn csv_round_trip() {
        let s = MetricSnapshot {
            iteration: 3,
            evals: 1500,
            qd_score: 12.345678901234567,
            unique_qd_score: 10.0,
            coverage_pct: 41.0,
            unique_coverage_pct: 33.25,
            best_fitness: Some(-0.1),
            fd_abs_corr: None,
            redundancy: 0.0775,
            depot_size: 812,
        };
        assert_eq!(MetricSnapshot::from_csv_row(&s.csv_row()).unwrap(), s);
        assert_eq!(MetricSnapshot::csv_header().split(',').count(), 10);
    }
}
