//! Domain types shared by every part of the search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Controller parameters, one real value per gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub Vec<f64>);

impl Genome {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.0.iter().all(|&v| v >= lo && v <= hi)
    }
}

/// Observation matrix of shape `channels × timepoints`, stored channel-major:
/// entry `(c, t)` lives at `c * timepoints + t`. The flattened order is the
/// one fed to the encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    channels: usize,
    timepoints: usize,
    data: Vec<f64>,
}

impl ObservationMatrix {
    pub fn new(channels: usize, timepoints: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * timepoints {
            return Err(Error::Structural(format!(
                "observation data has {} entries, expected {channels}x{timepoints}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEvaluation(format!(
                "non-finite observation at flat index {bad}"
            )));
        }
        Ok(Self {
            channels,
            timepoints,
            data,
        })
    }

    pub fn zeros(channels: usize, timepoints: usize) -> Self {
        Self {
            channels,
            timepoints,
            data: vec![0.0; channels * timepoints],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn timepoints(&self) -> usize {
        self.timepoints
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.timepoints)
    }

    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.data[channel * self.timepoints + t]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let start = channel * self.timepoints;
        &self.data[start..start + self.timepoints]
    }

    /// Channel-major flattening.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Element-wise mean of equally shaped matrices.
    pub fn mean_of(items: &[ObservationMatrix]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Structural("mean of zero observation matrices".into()))?;
        let mut acc = vec![0.0; first.data.len()];
        for m in items {
            if m.shape() != first.shape() {
                return Err(Error::Structural(format!(
                    "observation shape {:?} differs from {:?}",
                    m.shape(),
                    first.shape()
                )));
            }
            for (a, v) in acc.iter_mut().zip(&m.data) {
                *a += v;
            }
        }
        let n = items.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Self::new(first.channels, first.timepoints, acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Task reward averaged over episodes.
    pub fitness: f64,
    /// Observations averaged over episodes.
    pub observations: ObservationMatrix,
    pub episode_count: u32,
    /// Episodes that ended because the integration blew up.
    #[serde(default)]
    pub unstable_episodes: u32,
}

impl Evaluation {
    pub fn validate(&self) -> Result<()> {
        if !self.fitness.is_finite() {
            return Err(Error::InvalidEvaluation(format!(
                "fitness is not finite: {}",
                self.fitness
            )));
        }
        if self.episode_count == 0 {
            return Err(Error::InvalidEvaluation("zero episodes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolutionId(pub u64);

impl std::fmt::Display for SolutionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

pub const DEFAULT_CURIOSITY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub id: SolutionId,
    pub genome: Genome,
    pub evaluation: Evaluation,
    /// Feature descriptors keyed by container id.
    pub descriptors: BTreeMap<usize, Vec<f64>>,
    pub curiosity: f64,
}

impl Solution {
    pub fn new(id: SolutionId, genome: Genome, evaluation: Evaluation) -> Self {
        Self {
            id,
            genome,
            evaluation,
            descriptors: BTreeMap::new(),
            curiosity: DEFAULT_CURIOSITY,
        }
    }

    pub fn fitness(&self) -> f64 {
        self.evaluation.fitness
    }

    pub fn descriptor(&self, container: usize) -> Option<&[f64]> {
        self.descriptors.get(&container).map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_rejects_bad_shape_and_nan() {
        assert!(matches!(
            ObservationMatrix::new(2, 3, vec![0.0; 5]),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            ObservationMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::InvalidEvaluation(_))
        ));
    }

    #[test]
    fn channel_major_layout() {
        let m = ObservationMatrix::new(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(m.channel(1), &[4., 5., 6.]);
        assert_eq!(m.get(0, 2), 3.0);
    }

    #[test]
    fn mean_of_matrices() {
        let a = ObservationMatrix::new(1, 2, vec![1.0, 3.0]).unwrap();
        let b = ObservationMatrix::new(1, 2, vec![3.0, 5.0]).unwrap();
        let m = ObservationMatrix::mean_of(&[a, b]).unwrap();
        assert_eq!(m.as_flat(), &[2.0, 4.0]);
    }
}
