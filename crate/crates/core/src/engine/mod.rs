//! The multi-container search loop.

mod operators;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    DiversityConfig, InputScaling, ModularAutoEncoder, TrainReport, TrainingConfig, Topology,
};
use crate::container::{AddOutcome, DepotContainer, GridContainer};
use crate::descriptors::{DescriptorExtractor, ExtractorKind, LearnedModel};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricSnapshot};
use crate::quantile::{QuantileTransform, DEFAULT_N_QUANTILES};
use crate::rng::{self, Stream};
use crate::tasks::Task;
use crate::types::{Evaluation, Genome, ObservationMatrix, Solution, SolutionId};

pub use operators::{
    mutate_polynomial, polynomial_gene, select_curiosity_roulette, uniform_genome, CuriosityConfig,
    MutationConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingStrategy {
    /// Every offspring is offered to every container.
    Shared,
    /// Containers take turns; an offspring only competes in its parent's container.
    NonShared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingStrategy {
    None,
    PreTrained,
    Online,
}

/// Auto-encoder settings for learned-descriptor containers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    pub topology: Topology,
    pub diversity: DiversityConfig,
    pub training: TrainingConfig,
    /// Retrain once this many solutions have entered the depot.
    pub period: usize,
    #[serde(default = "default_n_quantiles")]
    pub n_quantiles: usize,
}

fn default_n_quantiles() -> usize {
    DEFAULT_N_QUANTILES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    pub init_budget: usize,
    pub eval_budget: u64,
    pub batch_size: usize,
    pub sharing: SharingStrategy,
    pub training: TrainingStrategy,
    pub mutation: MutationConfig,
    #[serde(default)]
    pub curiosity: CuriosityConfig,
    pub learning: Option<LearningConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerSpec {
    pub shape: Vec<usize>,
    pub extractor: DescriptorExtractor,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub batch: usize,
    pub evaluations: usize,
    /// Evaluations charged so far, initialisation included.
    pub evals_used: u64,
    pub adds: usize,
    pub evictions: usize,
    pub rejections: usize,
    pub accepted_offspring: usize,
    pub fresh_genomes: usize,
    pub partial: bool,
    pub retrain: bool,
    pub occupancy: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerReindex {
    pub container: usize,
    pub before: usize,
    pub retained: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReindexReport {
    pub containers: Vec<ContainerReindex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub depot_size: usize,
    pub training: TrainReport,
    /// `None` when training diverged and the previous model was kept.
    pub reindex: Option<ReindexReport>,
}

pub struct Engine {
    task: Box<dyn Task>,
    cfg: EngineConfig,
    containers: Vec<GridContainer>,
    extractors: Vec<DescriptorExtractor>,
    depot: DepotContainer,
    model: Option<LearnedModel>,
    selection_rng: rng::Rng,
    mutation_rng: rng::Rng,
    training_rng: rng::Rng,
    evals_used: u64,
    next_id: u64,
    focus: usize,
    charged: Vec<u64>,
    batches: usize,
    initialised: bool,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("task", &self.task.name())
            .field("containers", &self.containers.len())
            .field("depot", &self.depot.len())
            .field("evals_used", &self.evals_used)
            .finish()
    }
}

impl Engine {
    pub fn new(task: Box<dyn Task>, cfg: EngineConfig, specs: Vec<ContainerSpec>) -> Result<Self> {
        cfg.mutation.validate()?;
        cfg.curiosity.validate()?;
        if specs.is_empty() {
            return Err(Error::Config("at least one container is required".into()));
        }
        if cfg.batch_size == 0 || cfg.init_budget < 2 {
            return Err(Error::Config("batch size must be positive and initialisation needs 2+ genomes".into()));
        }
        let mut learned_modules = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            if s.shape.len() != s.extractor.out_dim {
                return Err(Error::Config(format!(
                    "container {i} has a {}-d grid but a {}-d descriptor",
                    s.shape.len(),
                    s.extractor.out_dim
                )));
            }
            if let ExtractorKind::Learned { module, .. } = s.extractor.kind {
                learned_modules.push(module);
            }
        }
        let mut sorted = learned_modules.clone();
        sorted.sort_unstable();
        if sorted != (0..learned_modules.len()).collect::<Vec<_>>() {
            return Err(Error::Config("learned containers must bind modules 0..M one-to-one".into()));
        }
        match (&cfg.learning, learned_modules.is_empty(), cfg.training) {
            (_, true, TrainingStrategy::None) => {}
            (Some(l), false, TrainingStrategy::PreTrained | TrainingStrategy::Online) => {
                l.diversity.validate()?;
                l.training.validate()?;
                if specs
                    .iter()
                    .any(|s| s.extractor.is_learned() && s.extractor.out_dim != l.topology.latent_dim)
                {
                    return Err(Error::Config("learned grid dimensionality must equal the latent size".into()));
                }
                if l.period == 0 {
                    return Err(Error::Config("training period must be positive".into()));
                }
            }
            (_, true, _) => {
                return Err(Error::Config("hardcoded descriptors take training strategy 'none'".into()))
            }
            _ => {
                return Err(Error::Config(
                    "learned descriptors need a training strategy and auto-encoder settings".into(),
                ))
            }
        }
        let containers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| GridContainer::unit(i, s.shape.clone()))
            .collect::<Result<Vec<_>>>()?;
        let n = containers.len();
        Ok(Self {
            task,
            containers,
            extractors: specs.into_iter().map(|s| s.extractor).collect(),
            depot: DepotContainer::new(),
            model: None,
            selection_rng: rng::stream(cfg.seed, Stream::Selection),
            mutation_rng: rng::stream(cfg.seed, Stream::Mutation),
            training_rng: rng::stream(cfg.seed, Stream::Training),
            evals_used: 0,
            next_id: 0,
            focus: 0,
            charged: vec![0; n],
            batches: 0,
            initialised: false,
            cfg,
        })
    }

    pub fn task(&self) -> &dyn Task {
        self.task.as_ref()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn containers(&self) -> &[GridContainer] {
        &self.containers
    }

    pub fn extractors(&self) -> &[DescriptorExtractor] {
        &self.extractors
    }

    pub fn depot(&self) -> &DepotContainer {
        &self.depot
    }

    pub fn model(&self) -> Option<&LearnedModel> {
        self.model.as_ref()
    }

    pub fn evals_used(&self) -> u64 {
        self.evals_used
    }

    /// Evaluations charged to each container by its offspring (initialisation excluded).
    pub fn charged(&self) -> &[u64] {
        &self.charged
    }

    pub fn batches_run(&self) -> usize {
        self.batches
    }

    pub fn budget_left(&self) -> u64 {
        (self.cfg.init_budget as u64 + self.cfg.eval_budget).saturating_sub(self.evals_used)
    }

    fn has_learned(&self) -> bool {
        self.extractors.iter().any(DescriptorExtractor::is_learned)
    }

    /// Evaluate genomes in parallel. Seeds depend only on the global
    /// evaluation index, so results do not depend on the thread count.
    fn evaluate_all(&mut self, genomes: &[Genome]) -> Result<Vec<Evaluation>> {
        let first = self.evals_used;
        let seed = self.cfg.seed;
        let task = self.task.as_ref();
        let evals = genomes
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let e = task.evaluate(g, rng::evaluation_seed(seed, first + i as u64))?;
                e.validate()?;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        self.evals_used += genomes.len() as u64;
        Ok(evals)
    }

    fn new_solution(&mut self, genome: Genome, evaluation: Evaluation) -> Solution {
        let id = SolutionId(self.next_id);
        self.next_id += 1;
        Solution::new(id, genome, evaluation)
    }

    /// Descriptors under container `c` for a batch of observations.
    fn describe(&self, c: usize, obs: &[&ObservationMatrix]) -> Result<Vec<Vec<f64>>> {
        self.extractors[c].extract_batch(obs, self.model.as_ref())
    }

    /// Fit a model on `corpus`, starting from `previous` when given.
    fn fit_model(
        &mut self,
        corpus: &[&ObservationMatrix],
        previous: Option<&LearnedModel>,
    ) -> Result<(Option<LearnedModel>, TrainReport)> {
        let l = self.cfg.learning.clone().expect("validated learning config");
        let scaling = InputScaling::fit(corpus.iter().copied())?;
        let n_modules = self.extractors.iter().filter(|e| e.is_learned()).count();
        let mut ensemble = match previous {
            Some(m) => m.ensemble.clone(),
            None => ModularAutoEncoder::xavier(
                scaling.input_dim(),
                n_modules,
                &l.topology,
                l.diversity,
                &mut self.training_rng,
            )?,
        };
        let x = scaling.matrix(corpus.iter().copied())?;
        let report = ensemble.train(&x, &l.training, &mut self.training_rng)?;
        if report.diverged.is_some() {
            log::warn!("auto-encoder training diverged: {:?}", report.diverged);
            return Ok((None, report));
        }
        let mut quantiles = vec![None; n_modules];
        for ex in &self.extractors {
            if let ExtractorKind::Learned { module, quantile: true } = ex.kind {
                let z = ensemble.encode(module, &x)?;
                let samples: Vec<Vec<f64>> = z.rows().into_iter().map(|r| r.to_vec()).collect();
                let n_q = l.n_quantiles.min(samples.len());
                quantiles[module] = Some(QuantileTransform::fit(&samples, n_q)?);
            }
        }
        Ok((
            Some(LearnedModel {
                scaling,
                ensemble,
                quantiles,
            }),
            report,
        ))
    }

    /// Offer `solution` to the listed containers. Descriptors must already be
    /// attached. Returns whether any container accepted it.
    fn offer(&mut self, solution: Solution, targets: &[usize], stats: &mut BatchStats) -> Result<bool> {
        let mut accepted = false;
        for &c in targets {
            match self.containers[c].add(solution.clone())? {
                AddOutcome::AddedToEmpty => {
                    stats.adds += 1;
                    accepted = true;
                }
                AddOutcome::ReplacedWeaker(_) => {
                    stats.evictions += 1;
                    accepted = true;
                }
                AddOutcome::Rejected => stats.rejections += 1,
            }
        }
        if accepted {
            self.depot.record(&solution);
            stats.accepted_offspring += 1;
        }
        Ok(accepted)
    }

    /// Sample and evaluate the initial population, fit the first model on it
    /// when descriptors are learned, then fill every container.
    pub fn initialize(&mut self) -> Result<(BatchStats, Option<TrainReport>)> {
        if self.initialised {
            return Err(Error::Config("engine already initialised".into()));
        }
        let mut init_rng = rng::stream(self.cfg.seed, Stream::Init);
        let dim = self.task.genome_dim();
        let bounds = self.task.genome_bounds();
        let genomes: Vec<Genome> = (0..self.cfg.init_budget)
            .map(|_| uniform_genome(dim, bounds, &mut init_rng))
            .collect();
        let evals = self.evaluate_all(&genomes)?;
        let mut report = None;
        if self.has_learned() {
            let obs: Vec<&ObservationMatrix> = evals.iter().map(|e| &e.observations).collect();
            let (model, r) = self.fit_model(&obs, None)?;
            if let Some(d) = &r.diverged {
                return Err(Error::Divergence {
                    epoch: d.epoch,
                    step: d.step,
                    loss: d.loss,
                });
            }
            self.model = model;
            report = Some(r);
        }
        let solutions: Vec<Solution> = genomes
            .into_iter()
            .zip(evals)
            .map(|(g, e)| self.new_solution(g, e))
            .collect();
        let all: Vec<usize> = (0..self.containers.len()).collect();
        let mut described = self.attach_descriptors(solutions, &all)?;
        let mut stats = BatchStats {
            evaluations: described.len(),
            ..BatchStats::default()
        };
        for s in described.drain(..) {
            self.offer(s, &all, &mut stats)?;
        }
        self.depot.mark_trained();
        self.initialised = true;
        stats.evals_used = self.evals_used;
        stats.occupancy = self.containers.iter().map(GridContainer::len).collect();
        Ok((stats, report))
    }

    fn attach_descriptors(&self, mut solutions: Vec<Solution>, containers: &[usize]) -> Result<Vec<Solution>> {
        for &c in containers {
            let obs: Vec<&ObservationMatrix> = solutions.iter().map(|s| &s.evaluation.observations).collect();
            let fds = self.describe(c, &obs)?;
            for (s, fd) in solutions.iter_mut().zip(fds) {
                s.descriptors.insert(c, fd);
            }
        }
        Ok(solutions)
    }

    /// Container driving each of the next `n` iterations under the
    /// non-shared strategy: equal contiguous shares, with the remainder
    /// going to the containers from the current focus onward.
    fn nonshared_schedule(&mut self, n: usize) -> Vec<usize> {
        let nc = self.containers.len();
        let mut out = Vec::with_capacity(n);
        for k in 0..nc {
            let c = (self.focus + k) % nc;
            let share = n / nc + usize::from(k < n % nc);
            out.extend(std::iter::repeat_n(c, share));
        }
        self.focus = (self.focus + n % nc) % nc;
        out
    }

    /// One batch of select, mutate, evaluate and insert.
    pub fn run_batch(&mut self) -> Result<BatchStats> {
        if !self.initialised {
            return Err(Error::Config("run_batch before initialize".into()));
        }
        let left = self.budget_left();
        let n = (self.cfg.batch_size as u64).min(left) as usize;
        let mut stats = BatchStats {
            batch: self.batches + 1,
            evaluations: n,
            partial: n < self.cfg.batch_size,
            ..BatchStats::default()
        };
        let nc = self.containers.len();
        let sources: Vec<usize> = match self.cfg.sharing {
            SharingStrategy::Shared => (0..n).map(|_| self.selection_rng.random_range(0..nc)).collect(),
            SharingStrategy::NonShared => self.nonshared_schedule(n),
        };
        let bounds = self.task.genome_bounds();
        let dim = self.task.genome_dim();
        let mut parents: Vec<Option<(usize, SolutionId)>> = Vec::with_capacity(n);
        let mut genomes = Vec::with_capacity(n);
        for &c in &sources {
            match select_curiosity_roulette(&self.containers[c], self.cfg.curiosity.floor, &mut self.selection_rng) {
                Ok(flat) => {
                    let parent = self.containers[c].cell(flat).expect("selected cell is occupied");
                    genomes.push(mutate_polynomial(&parent.genome, &self.cfg.mutation, bounds, &mut self.mutation_rng));
                    parents.push(Some((flat, parent.id)));
                }
                Err(Error::EmptyContainer(_)) => {
                    genomes.push(uniform_genome(dim, bounds, &mut self.mutation_rng));
                    parents.push(None);
                    stats.fresh_genomes += 1;
                }
                Err(e) => return Err(e),
            }
            self.charged[c] += 1;
        }
        let evals = self.evaluate_all(&genomes)?;
        let offspring: Vec<Solution> = genomes
            .into_iter()
            .zip(evals)
            .map(|(g, e)| self.new_solution(g, e))
            .collect();
        let offspring = match self.cfg.sharing {
            SharingStrategy::Shared => self.attach_descriptors(offspring, &(0..nc).collect::<Vec<_>>())?,
            SharingStrategy::NonShared => {
                let mut out = offspring;
                for c in 0..nc {
                    let idx: Vec<usize> = (0..n).filter(|&i| sources[i] == c).collect();
                    let obs: Vec<&ObservationMatrix> = idx.iter().map(|&i| &out[i].evaluation.observations).collect();
                    let fds = self.describe(c, &obs)?;
                    for (i, fd) in idx.into_iter().zip(fds) {
                        out[i].descriptors.insert(c, fd);
                    }
                }
                out
            }
        };
        let all: Vec<usize> = (0..nc).collect();
        for ((child, &c), parent) in offspring.into_iter().zip(&sources).zip(parents) {
            let targets = match self.cfg.sharing {
                SharingStrategy::Shared => &all[..],
                SharingStrategy::NonShared => std::slice::from_ref(&c),
            };
            let success = self.offer(child, targets, &mut stats)?;
            if let Some((flat, id)) = parent {
                if let Some(p) = self.containers[c].cell_mut(flat).filter(|p| p.id == id) {
                    p.curiosity = self.cfg.curiosity.updated(p.curiosity, success);
                }
            }
        }
        self.batches += 1;
        stats.evals_used = self.evals_used;
        stats.occupancy = self.containers.iter().map(GridContainer::len).collect();
        Ok(stats)
    }

    pub fn retrain_due(&self) -> bool {
        match (&self.cfg.learning, self.cfg.training) {
            (Some(l), TrainingStrategy::Online) => self.depot.added_since_last_training() >= l.period,
            _ => false,
        }
    }

    /// Retrain on the depot when the online schedule says so, refit the
    /// quantile transforms, then re-place the elites of learned containers.
    pub fn maybe_retrain(&mut self) -> Result<Option<RetrainReport>> {
        if !self.retrain_due() {
            return Ok(None);
        }
        self.retrain().map(Some)
    }

    /// Unconditional retrain on the current depot.
    pub fn retrain(&mut self) -> Result<RetrainReport> {
        if !self.has_learned() || self.cfg.learning.is_none() {
            return Err(Error::Config("no learned containers to retrain".into()));
        }
        let depot = std::mem::take(&mut self.depot);
        let corpus: Vec<&ObservationMatrix> = depot.solutions().iter().map(|s| &s.evaluation.observations).collect();
        let previous = self.model.clone();
        let fitted = self.fit_model(&corpus, previous.as_ref());
        self.depot = depot;
        let (model, training) = fitted?;
        let depot_size = self.depot.len();
        let Some(model) = model else {
            return Ok(RetrainReport {
                depot_size,
                training,
                reindex: None,
            });
        };
        self.model = Some(model);
        self.depot.mark_trained();
        let reindex = self.reindex_all()?;
        Ok(RetrainReport {
            depot_size,
            training,
            reindex: Some(reindex),
        })
    }

    /// Empty every learned container, recompute descriptors under the
    /// current model and re-insert by descending fitness (ties by id).
    pub fn reindex_all(&mut self) -> Result<ReindexReport> {
        let mut report = ReindexReport::default();
        for c in 0..self.containers.len() {
            if !self.extractors[c].is_learned() {
                continue;
            }
            let drained = self.containers[c].drain();
            let before = drained.len();
            let mut drained = self.attach_descriptors(drained, &[c])?;
            drained.sort_by(|a, b| b.fitness().total_cmp(&a.fitness()).then(a.id.cmp(&b.id)));
            let mut retained = 0;
            for s in drained {
                if self.containers[c].add(s)?.accepted() {
                    retained += 1;
                }
            }
            report.containers.push(ContainerReindex {
                container: c,
                before,
                retained,
                dropped: before - retained,
            });
        }
        Ok(report)
    }

    /// Rows of depot descriptors under every container's extractor,
    /// concatenated per solution.
    pub fn depot_descriptor_rows(&self) -> Result<Vec<Vec<f64>>> {
        let obs: Vec<&ObservationMatrix> = self.depot.solutions().iter().map(|s| &s.evaluation.observations).collect();
        let mut rows = vec![Vec::new(); obs.len()];
        for c in 0..self.containers.len() {
            for (row, fd) in rows.iter_mut().zip(self.describe(c, &obs)?) {
                row.extend(fd);
            }
        }
        Ok(rows)
    }

    pub fn snapshot(&self) -> Result<MetricSnapshot> {
        let corr = metrics::fd_abs_correlation(&self.depot_descriptor_rows()?);
        Ok(MetricSnapshot::compute(
            self.batches,
            self.evals_used,
            &self.containers,
            self.task.fitness_bounds(),
            corr,
            self.depot.len(),
        ))
    }

    pub fn finished(&self) -> bool {
        self.budget_left() == 0
    }
}
