//! Cross-replicate summaries of metric logs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mcaurora::metrics::{MetricSnapshot, METRIC_COLUMNS};

use crate::error::{CliError, Result};
use crate::runner::{Metadata, ReplicateResult, FAILED_FILE, METRICS_FILE};

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const AGGREGATE_COLUMNS: [&str; 9] = ["iteration", "metric", "n", "min", "q25", "mean", "q75", "max", "std"];

/// Metrics summarised across replicates; `iteration` is the row key.
pub const AGGREGATED_METRICS: [&str; 9] = [
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

pub fn metric_value(s: &MetricSnapshot, metric: &str) -> Option<f64> {
    match metric {
        "evals" => Some(s.evals as f64),
        "qd_score" => Some(s.qd_score),
        "unique_qd_score" => Some(s.unique_qd_score),
        "coverage_pct" => Some(s.coverage_pct),
        "unique_coverage_pct" => Some(s.unique_coverage_pct),
        "best_fitness" => s.best_fitness,
        "fd_abs_corr" => s.fd_abs_corr,
        "redundancy" => Some(s.redundancy),
        "depot_size" => Some(s.depot_size as f64),
        _ => None,
    }
}

/// Parse a metric log, skipping `#` metadata and the column header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricSnapshot>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let header = METRIC_COLUMNS.join(",");
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != header)
        .map(|l| {
            MetricSnapshot::from_csv_row(l).map_err(|e| CliError::Malformed {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// `key=value` pairs of the first `#` line of a file.
pub fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    let Some(body) = first.strip_prefix('#') else {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            message: "no metadata header".into(),
        });
    };
    Ok(body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q25: f64,
    pub mean: f64,
    pub q75: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    Some(Summary {
        n,
        min: v[0],
        q25: quantile(&v, 0.25),
        mean,
        q75: quantile(&v, 0.75),
        max: v[n - 1],
        std: var.sqrt(),
    })
}

/// Replicate directories under `dir`: itself when it holds a metric log,
/// otherwise its `seed-*` children in seed order.
pub fn replicate_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(METRICS_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut found: Vec<(u64, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let seed = name.strip_prefix("seed-")?.parse().ok()?;
            e.path().join(METRICS_FILE).is_file().then(|| (seed, e.path()))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(CliError::MissingArtifacts {
            dir: dir.to_path_buf(),
            expected: vec![METRICS_FILE.into(), format!("seed-*/{METRICS_FILE}")],
        });
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Aggregate table over the replicates found under `dirs`. Failed
/// replicates are listed in the header and left out of the statistics.
pub fn aggregate_dirs(dirs: &[PathBuf]) -> Result<String> {
    let mut replicates = Vec::new();
    for d in dirs {
        replicates.extend(replicate_dirs(d)?);
    }
    let mut hashes = Vec::new();
    let mut seeds = Vec::new();
    let mut failed = Vec::new();
    let mut runs = Vec::new();
    let mut version = String::new();
    for dir in &replicates {
        let path = dir.join(METRICS_FILE);
        let meta = read_metadata(&path)?;
        let hash = meta.get("config_sha256").cloned().unwrap_or_default();
        if !hashes.contains(&hash) {
            hashes.push(hash);
        }
        version = meta.get("version").cloned().unwrap_or_default();
        let seed = meta.get("seed").cloned().unwrap_or_default();
        if dir.join(FAILED_FILE).exists() {
            failed.push(seed);
            continue;
        }
        seeds.push(seed);
        runs.push(read_metrics(&path)?);
    }
    let mut out = format!(
        "# config_sha256={} seed={} version={}\n",
        hashes.join(","),
        seeds.join(","),
        version
    );
    if !failed.is_empty() {
        out.push_str(&format!("# failed={}\n", failed.join(",")));
    }
    out.push_str(&AGGREGATE_COLUMNS.join(","));
    out.push('\n');
    let mut by_iteration: BTreeMap<usize, Vec<&MetricSnapshot>> = BTreeMap::new();
    for run in &runs {
        for s in run {
            by_iteration.entry(s.iteration).or_default().push(s);
        }
    }
    for (iteration, snaps) in by_iteration {
        for metric in AGGREGATED_METRICS {
            let values: Vec<f64> = snaps.iter().filter_map(|s| metric_value(s, metric)).collect();
            let row = match summarize(&values) {
                Some(s) => format!(
                    "{iteration},{metric},{},{},{},{},{},{},{}",
                    s.n, s.min, s.q25, s.mean, s.q75, s.max, s.std
                ),
                None => format!("{iteration},{metric},0,NA,NA,NA,NA,NA,NA"),
            };
            out.push_str(&row);
            out.push('\n');
        }
    }
    Ok(out)
}

pub(crate) fn write_experiment_aggregate(out: &Path, meta: &Metadata, results: &[ReplicateResult]) -> Result<()> {
    let dirs: Vec<PathBuf> = results.iter().map(|r| r.dir.clone()).collect();
    let text = aggregate_dirs(&dirs)?;
    debug_assert!(text.contains(&meta.config_hash));
    let path = out.join(AGGREGATE_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(path, e))
}
