//! Plot-ready tables: aggregate curves and per-container fitness heatmaps.

use std::fs;
use std::path::{Path, PathBuf};

use mcaurora::container::read_snapshot;

use crate::aggregate::{aggregate_dirs, read_metadata, replicate_dirs};
use crate::error::{CliError, Result};
use crate::runner::CONTAINERS_FILE;

pub const PLOT_DIR: &str = "plot";
pub const CURVES_FILE: &str = "curves.csv";
/// Value written for empty cells.
pub const EMPTY_CELL: &str = "NA";

/// Fitness matrix of one container, `None` where the cell is empty.
pub type Heatmap = Vec<Vec<Option<f64>>>;

pub fn heatmaps(containers_file: &Path) -> Result<Vec<Heatmap>> {
    let meta = read_metadata(containers_file)?;
    let malformed = |message: String| CliError::Malformed {
        path: containers_file.to_path_buf(),
        message,
    };
    let shapes = meta
        .get("shapes")
        .ok_or_else(|| malformed("no shapes in metadata".into()))?
        .split(',')
        .map(|s| {
            let dims: Vec<usize> = s.split('x').filter_map(|d| d.parse().ok()).collect();
            match dims[..] {
                [r, c] => Ok((r, c)),
                _ => Err(malformed(format!("bad grid shape '{s}'"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let text = fs::read_to_string(containers_file).map_err(|e| CliError::io(containers_file, e))?;
    let mut maps: Vec<Heatmap> = shapes.iter().map(|&(r, c)| vec![vec![None; c]; r]).collect();
    for rec in read_snapshot(&text)? {
        let map = maps
            .get_mut(rec.container_id)
            .ok_or_else(|| malformed(format!("record for unknown container {}", rec.container_id)))?;
        let cell = map
            .get_mut(rec.bin[0])
            .and_then(|row| row.get_mut(rec.bin[1]))
            .ok_or_else(|| malformed(format!("bin {:?} outside container {}", rec.bin, rec.container_id)))?;
        *cell = Some(rec.fitness);
    }
    Ok(maps)
}

pub fn heatmap_csv(map: &Heatmap) -> String {
    let mut out = String::new();
    for row in map {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map_or(EMPTY_CELL.to_string(), |f| f.to_string()))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Write `plot/curves.csv` and one heatmap per container and replicate under
/// `run_dir`; returns the files written.
pub fn emit_plot_data(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let replicates = replicate_dirs(run_dir)?;
    let missing: Vec<String> = replicates
        .iter()
        .filter(|d| !d.join(CONTAINERS_FILE).is_file())
        .map(|d| d.join(CONTAINERS_FILE).display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts {
            dir: run_dir.to_path_buf(),
            expected: missing,
        });
    }
    let plot = run_dir.join(PLOT_DIR);
    fs::create_dir_all(&plot).map_err(|e| CliError::io(&plot, e))?;
    let mut written = Vec::new();
    let curves = plot.join(CURVES_FILE);
    fs::write(&curves, aggregate_dirs(&[run_dir.to_path_buf()])?).map_err(|e| CliError::io(&curves, e))?;
    written.push(curves);
    for dir in replicates {
        let tag = dir.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
        for (k, map) in heatmaps(&dir.join(CONTAINERS_FILE))?.iter().enumerate() {
            let path = plot.join(format!("heatmap-{tag}-c{k}.csv"));
            fs::write(&path, heatmap_csv(map)).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
