//! Evaluation tasks mapping a genome to fitness and an observation matrix.

mod toy;
mod walker;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{Evaluation, Genome};

pub use toy::ToyTask;
pub use walker::{EpisodeSetup, Terrain, Walker, WalkerParams};

/// A named observation channel and the range used to normalise hardcoded
/// descriptors built on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub bounds: (f64, f64),
}

impl ChannelInfo {
    pub fn new(name: &str, bounds: (f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            bounds,
        }
    }
}

/// Evaluation is a pure function of `(genome, seed)`.
pub trait Task: Send + Sync {
    fn name(&self) -> &str;
    fn genome_dim(&self) -> usize;
    fn genome_bounds(&self) -> (f64, f64);
    fn channels(&self) -> &[ChannelInfo];
    fn timepoints(&self) -> usize;
    fn episodes_per_eval(&self) -> u32;
    /// Static range used to normalise fitness in the QD-score.
    fn fitness_bounds(&self) -> (f64, f64);
    fn evaluate(&self, genome: &Genome, seed: u64) -> Result<Evaluation>;

    fn observation_shape(&self) -> (usize, usize) {
        (self.channels().len(), self.timepoints())
    }
}

/// Task selection with its namespaced parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Walker(#[serde(default)] WalkerParams),
    Toy,
}

impl TaskConfig {
    pub fn build(&self) -> Result<Box<dyn Task>> {
        Ok(match self {
            TaskConfig::Walker(p) => Box::new(Walker::new(p.clone())?),
            TaskConfig::Toy => Box::new(ToyTask::new()),
        })
    }
}
