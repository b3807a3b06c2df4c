use std::f64::consts::PI;

use super::{ChannelInfo, Task};
use crate::error::{Error, Result};
use crate::types::{Evaluation, Genome, ObservationMatrix};

const TIMEPOINTS: usize = 10;
const BOUND: f64 = 5.12;

/// Two-gene fixture: fitness is the negated Rastrigin function and the
/// observations are the channels `(g1, g2, g1 + g2, g1 - g2)` scaled by a
/// linear time ramp.
#[derive(Debug, Clone)]
pub struct ToyTask {
    channels: Vec<ChannelInfo>,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyTask {
    pub fn new() -> Self {
        let single = (-BOUND, BOUND);
        let double = (-2.0 * BOUND, 2.0 * BOUND);
        Self {
            channels: vec![
                ChannelInfo::new("g1", single),
                ChannelInfo::new("g2", single),
                ChannelInfo::new("sum", double),
                ChannelInfo::new("diff", double),
            ],
        }
    }

    pub fn rastrigin(g: &[f64]) -> f64 {
        10.0 * g.len() as f64 + g.iter().map(|x| x * x - 10.0 * (2.0 * PI * x).cos()).sum::<f64>()
    }
}

impl Task for ToyTask {
    fn name(&self) -> &str {
        "toy"
    }

    fn genome_dim(&self) -> usize {
        2
    }

    fn genome_bounds(&self) -> (f64, f64) {
        (-BOUND, BOUND)
    }

    fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }

    fn timepoints(&self) -> usize {
        TIMEPOINTS
    }

    fn episodes_per_eval(&self) -> u32 {
        1
    }

    fn fitness_bounds(&self) -> (f64, f64) {
        (-81.0, 0.0)
    }

    fn evaluate(&self, genome: &Genome, _seed: u64) -> Result<Evaluation> {
        let g = genome.values();
        if g.len() != 2 {
            return Err(Error::Structural(format!("toy task takes 2 genes, got {}", g.len())));
        }
        let base = [g[0], g[1], g[0] + g[1], g[0] - g[1]];
        let mut data = Vec::with_capacity(4 * TIMEPOINTS);
        for v in base {
            data.extend((0..TIMEPOINTS).map(|t| v * (t + 1) as f64 / TIMEPOINTS as f64));
        }
        Ok(Evaluation {
            fitness: -Self::rastrigin(g),
            observations: ObservationMatrix::new(4, TIMEPOINTS, data)?,
            episode_count: 1,
            unstable_episodes: 0,
        })
    }
}
