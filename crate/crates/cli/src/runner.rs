//! Replicate execution and on-disk artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mcaurora::container::write_snapshot;
use mcaurora::engine::{BatchStats, Engine, RetrainReport};
use mcaurora::metrics::MetricSnapshot;
use mcaurora::autoencoder::TrainReport;

use crate::aggregate;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUTPUT_ROOT_ENV: &str = "MCAURORA_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RUNLOG_FILE: &str = "runlog.csv";
pub const CONTAINERS_FILE: &str = "containers.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const FAILED_FILE: &str = "FAILED";

pub const RUNLOG_COLUMNS: [&str; 17] = [
    "iteration",
    "evals_used",
    "evaluations",
    "adds",
    "evictions",
    "rejections",
    "accepted_offspring",
    "fresh_genomes",
    "partial",
    "depot_size",
    "occupancy",
    "retrained",
    "diverged",
    "train_loss",
    "validation_loss",
    "reindex_retained",
    "reindex_dropped",
];

/// Provenance written as the first line of every artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

impl Metadata {
    pub fn new(cfg: &ExperimentConfig, seeds: Vec<u64>) -> Self {
        Self {
            config_hash: cfg.hash(),
            seeds,
            version: VERSION.to_string(),
        }
    }

    pub fn header(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "# config_sha256={} seed={} version={}",
            self.config_hash,
            seeds.join(","),
            self.version
        )
    }
}

/// Where a run writes: an explicit directory wins, then the config's
/// `output_dir`, then `<root>/<case>` with the root taken from the
/// environment or defaulting to `runs`.
pub fn resolve_output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
    match &cfg.output_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(&cfg.case),
    }
}

pub fn replicate_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn replicate_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.replicates as u64).map(|r| cfg.seed + r).collect()
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub snapshots: Vec<MetricSnapshot>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub replicates: Vec<ReplicateResult>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_line(out: &mut BufWriter<File>, path: &Path, line: &str) -> Result<()> {
    writeln!(out, "{line}")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Run every replicate, then write the cross-replicate aggregate. A failing
/// replicate keeps its partial artifacts and is listed in the aggregate.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let seeds = replicate_seeds(cfg);
    let meta = Metadata::new(cfg, seeds.clone());
    write_text(&out.join(CONFIG_FILE), &format!("{}\n{}", meta.header(), cfg.to_toml()))?;
    let mut results = Vec::new();
    for seed in seeds {
        let dir = replicate_dir(out, seed);
        let outcome = with_threads(threads, || run_replicate(cfg, seed, &dir))?;
        let result = match outcome {
            Ok(snapshots) => ReplicateResult {
                seed,
                dir,
                snapshots,
                error: None,
            },
            Err(e) => {
                log::error!("replicate seed {seed} failed: {e}");
                write_text(&dir.join(FAILED_FILE), &format!("{e}\n"))?;
                let snapshots = aggregate::read_metrics(&dir.join(METRICS_FILE)).unwrap_or_default();
                ReplicateResult {
                    seed,
                    dir,
                    snapshots,
                    error: Some(e.to_string()),
                }
            }
        };
        results.push(result);
    }
    aggregate::write_experiment_aggregate(out, &meta, &results)?;
    Ok(ExperimentSummary {
        dir: out.to_path_buf(),
        replicates: results,
    })
}

/// Run `f` inside a dedicated pool when a thread count is given.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config {
                    line: None,
                    message: format!("threads: {e}"),
                })?;
            Ok(pool.install(f))
        }
    }
}

/// One seeded run with metrics and run-log rows flushed after every batch.
pub fn run_replicate(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<MetricSnapshot>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let header = Metadata::new(cfg, vec![seed]).header();
    write_text(&dir.join(CONFIG_FILE), &format!("{header}\n{}", cfg.to_toml()))?;
    let metrics_path = dir.join(METRICS_FILE);
    let runlog_path = dir.join(RUNLOG_FILE);
    let mut metrics = create(&metrics_path)?;
    let mut runlog = create(&runlog_path)?;
    write_line(&mut metrics, &metrics_path, &header)?;
    write_line(&mut metrics, &metrics_path, &MetricSnapshot::csv_header())?;
    write_line(&mut runlog, &runlog_path, &header)?;
    write_line(&mut runlog, &runlog_path, &RUNLOG_COLUMNS.join(","))?;

    let mut engine = cfg.build_engine(seed)?;
    let (stats, init_training) = engine.initialize()?;
    let mut snapshots = Vec::new();
    let mut record = |engine: &Engine, stats: &BatchStats, training: Option<&TrainReport>, retrain: Option<&RetrainReport>| -> Result<()> {
        let snap = engine.snapshot()?;
        write_line(&mut metrics, &metrics_path, &snap.csv_row())?;
        let row = runlog_row(engine, stats, training, retrain);
        write_line(&mut runlog, &runlog_path, &row)?;
        snapshots.push(snap);
        Ok(())
    };
    record(&engine, &stats, init_training.as_ref(), None)?;
    while !engine.finished() {
        let stats = engine.run_batch()?;
        let retrain = engine.maybe_retrain()?;
        if let Some(r) = retrain.as_ref().filter(|r| r.training.diverged.is_some()) {
            log::warn!("seed {seed}: retraining diverged on a depot of {}; previous model kept", r.depot_size);
        }
        record(&engine, &stats, retrain.as_ref().map(|r| &r.training), retrain.as_ref())?;
    }

    let containers_path = dir.join(CONTAINERS_FILE);
    let mut out = create(&containers_path)?;
    let shapes: Vec<String> = engine
        .containers()
        .iter()
        .map(|c| c.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x"))
        .collect();
    write_line(&mut out, &containers_path, &format!("{header} shapes={}", shapes.join(",")))?;
    write_snapshot(&mut out, engine.containers())?;
    out.flush().map_err(|e| CliError::io(&containers_path, e))?;

    if let Some(model) = engine.model() {
        let path = dir.join(MODEL_FILE);
        let doc = serde_json::json!({ "metadata": header.trim_start_matches("# "), "model": model });
        let text = serde_json::to_string(&doc).map_err(mcaurora::Error::from)?;
        write_text(&path, &text)?;
    }
    Ok(snapshots)
}

fn runlog_row(engine: &Engine, s: &BatchStats, training: Option<&TrainReport>, retrain: Option<&RetrainReport>) -> String {
    let join = |v: Vec<usize>| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
    let reindex = retrain.and_then(|r| r.reindex.as_ref());
    [
        engine.batches_run().to_string(),
        s.evals_used.to_string(),
        s.evaluations.to_string(),
        s.adds.to_string(),
        s.evictions.to_string(),
        s.rejections.to_string(),
        s.accepted_offspring.to_string(),
        s.fresh_genomes.to_string(),
        s.partial.to_string(),
        engine.depot().len().to_string(),
        join(s.occupancy.clone()),
        training.is_some().to_string(),
        training.is_some_and(|t| t.diverged.is_some()).to_string(),
        opt(training.and_then(|t| t.train_loss.last().copied())),
        opt(training.and_then(|t| t.validation_loss.iter().rev().find_map(|v| *v))),
        reindex.map_or("NA".to_string(), |r| join(r.containers.iter().map(|c| c.retained).collect())),
        reindex.map_or("NA".to_string(), |r| join(r.containers.iter().map(|c| c.dropped).collect())),
    ]
    .join(",")
}
