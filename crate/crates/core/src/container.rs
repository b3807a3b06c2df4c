//! Grid containers of elites and the depot of every accepted solution.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Solution, SolutionId};

/// Discretise a feature descriptor into a grid cell.
///
/// Component `k` lands in `floor((fd_k - lo_k) / (hi_k - lo_k) * shape_k)`,
/// clamped to `[0, shape_k - 1]`, so a descriptor exactly on the upper bound
/// falls into the last bin.
pub fn bin_index(fd: &[f64], shape: &[usize], bounds: &[(f64, f64)]) -> Result<Vec<usize>> {
    if fd.len() != shape.len() || bounds.len() != shape.len() {
        return Err(Error::Structural(format!(
            "descriptor has {} dims, grid has {} dims and {} bounds",
            fd.len(),
            shape.len(),
            bounds.len()
        )));
    }
    fd.iter()
        .zip(shape)
        .zip(bounds)
        .map(|((&v, &bins), &(lo, hi))| {
            if !v.is_finite() {
                return Err(Error::InvalidEvaluation(format!(
                    "non-finite descriptor component {v}"
                )));
            }
            let scaled = ((v - lo) / (hi - lo) * bins as f64).floor();
            Ok(if scaled <= 0.0 {
                0
            } else {
                (scaled as usize).min(bins - 1)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AddOutcome {
    AddedToEmpty,
    /// The previous occupant, now evicted.
    ReplacedWeaker(Box<Solution>),
    Rejected,
}

impl AddOutcome {
    pub fn accepted(&self) -> bool {
        !matches!(self, AddOutcome::Rejected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridContainer {
    id: usize,
    shape: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    cells: Vec<Option<Solution>>,
    occupied: usize,
}

impl GridContainer {
    pub fn new(id: usize, shape: Vec<usize>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Config(format!("invalid grid shape {shape:?}")));
        }
        if bounds.len() != shape.len() {
            return Err(Error::Config(format!(
                "grid of {} dims needs {} bounds, got {}",
                shape.len(),
                shape.len(),
                bounds.len()
            )));
        }
        if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(hi > lo)) {
            return Err(Error::Config(format!("degenerate bounds [{lo}, {hi}]")));
        }
        let capacity = shape.iter().product();
        Ok(Self {
            id,
            shape,
            bounds,
            cells: vec![None; capacity],
            occupied: 0,
        })
    }

    /// Unit-cube bounds, used by every learned descriptor space.
    pub fn unit(id: usize, shape: Vec<usize>) -> Result<Self> {
        let dims = shape.len();
        Self::new(id, shape, vec![(0.0, 1.0); dims])
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    /// Row-major flat position of a bin tuple.
    pub fn flat_index(&self, bin: &[usize]) -> usize {
        bin.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&b, &s)| acc * s + b)
    }

    pub fn bin_of_flat(&self, mut flat: usize) -> Vec<usize> {
        let mut bin = vec![0; self.shape.len()];
        for (k, &s) in self.shape.iter().enumerate().rev() {
            bin[k] = flat % s;
            flat /= s;
        }
        bin
    }

    pub fn cell(&self, flat: usize) -> Option<&Solution> {
        self.cells.get(flat).and_then(Option::as_ref)
    }

    pub fn cell_mut(&mut self, flat: usize) -> Option<&mut Solution> {
        self.cells.get_mut(flat).and_then(Option::as_mut)
    }

    /// Occupied cells in flat-index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Solution)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|s| (i, s)))
    }

    pub fn solutions(&self) -> impl Iterator<Item = &Solution> {
        self.cells.iter().flatten()
    }

    pub fn bin_for(&self, solution: &Solution) -> Result<Vec<usize>> {
        let fd = solution.descriptor(self.id).ok_or_else(|| {
            Error::Structural(format!(
                "solution {} has no descriptor for container {}",
                solution.id, self.id
            ))
        })?;
        bin_index(fd, &self.shape, &self.bounds)
    }

    /// Place a solution, competing with the incumbent of its cell.
    /// Strictly higher fitness is required to evict; ties keep the incumbent.
    pub fn add(&mut self, solution: Solution) -> Result<AddOutcome> {
        let bin = self.bin_for(&solution)?;
        let flat = self.flat_index(&bin);
        let slot = &mut self.cells[flat];
        match slot {
            None => {
                *slot = Some(solution);
                self.occupied += 1;
                Ok(AddOutcome::AddedToEmpty)
            }
            Some(incumbent) if solution.fitness() > incumbent.fitness() => {
                let evicted = std::mem::replace(incumbent, solution);
                Ok(AddOutcome::ReplacedWeaker(Box::new(evicted)))
            }
            Some(_) => Ok(AddOutcome::Rejected),
        }
    }

    /// Remove and return every elite, in flat-index order.
    pub fn drain(&mut self) -> Vec<Solution> {
        self.occupied = 0;
        self.cells.iter_mut().filter_map(Option::take).collect()
    }

    pub fn snapshot_records(&self) -> Vec<SnapshotRecord> {
        self.iter()
            .map(|(flat, s)| SnapshotRecord {
                container_id: self.id,
                bin: self.bin_of_flat(flat),
                solution_id: s.id,
                fitness: s.fitness(),
                fd: s.descriptor(self.id).map(<[f64]>::to_vec).unwrap_or_default(),
                genome: s.genome.0.clone(),
            })
            .collect()
    }
}

/// One occupied cell in a container snapshot. Serialised as one JSON object
/// per line with the fields in exactly this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub container_id: usize,
    pub bin: Vec<usize>,
    pub solution_id: SolutionId,
    pub fitness: f64,
    pub fd: Vec<f64>,
    pub genome: Vec<f64>,
}

pub fn write_snapshot<W: Write>(out: &mut W, containers: &[GridContainer]) -> Result<()> {
    for c in containers {
        for rec in c.snapshot_records() {
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Parse snapshot lines, skipping blank lines and `#` metadata lines.
pub fn read_snapshot(text: &str) -> Result<Vec<SnapshotRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Append-only history of every solution accepted by any container.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DepotContainer {
    solutions: Vec<Solution>,
    ids: HashSet<SolutionId>,
    added_since_last_training: usize,
}

impl DepotContainer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` when the solution was appended, `false` for a duplicate id.
    pub fn record(&mut self, solution: &Solution) -> bool {
        if !self.ids.insert(solution.id) {
            return false;
        }
        self.solutions.push(solution.clone());
        self.added_since_last_training += 1;
        true
    }

    pub fn contains(&self, id: SolutionId) -> bool {
        self.ids.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn solutions(&self) -> &[Solution] {
        &self.solutions
    }

    pub fn added_since_last_training(&self) -> usize {
        self.added_since_last_training
    }

    pub fn mark_trained(&mut self) {
        self.added_since_last_training = 0;
    }
}
