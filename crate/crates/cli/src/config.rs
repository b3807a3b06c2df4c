//! Declarative experiment configuration.

use std::path::PathBuf;

use mcaurora::descriptors::{fd_pairs_default, DescriptorExtractor};
use mcaurora::engine::{
    ContainerSpec, CuriosityConfig, Engine, EngineConfig, LearningConfig, MutationConfig, SharingStrategy,
    TrainingStrategy,
};
use mcaurora::tasks::TaskConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdType {
    Hardcoded,
    /// Raw encoder latents.
    Ae,
    /// Encoder latents passed through a quantile transform.
    AeQt,
}

impl FdType {
    pub fn is_learned(self) -> bool {
        self != FdType::Hardcoded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub init_budget: usize,
    pub eval_budget: u64,
    pub batch_size: usize,
    pub mutation: MutationConfig,
    #[serde(default)]
    pub curiosity: CuriosityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: String,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub bin_budget: usize,
    pub fd_type: FdType,
    pub sharing: SharingStrategy,
    pub training: TrainingStrategy,
    /// Grid shape of each container.
    pub grids: Vec<[usize; 2]>,
    pub task: TaskConfig,
    pub search: SearchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning: Option<LearningConfig>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    /// Parse and validate, reporting the offending line when it can be found.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| match e {
            CliError::Config { line: None, message } => CliError::Config {
                line: message_key(&message).and_then(|k| find_key_line(text, k)),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serialises to TOML")
    }

    /// SHA-256 of the canonical TOML form, as lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn n_containers(&self) -> usize {
        self.grids.len()
    }

    pub fn total_bins(&self) -> usize {
        self.grids.iter().map(|g| g[0] * g[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |message: String| {
            Err(CliError::Config {
                line: None,
                message,
            })
        };
        if self.case.trim().is_empty() {
            return err("case: name must not be empty".into());
        }
        if self.replicates == 0 {
            return err("replicates: at least one replicate is required".into());
        }
        if self.grids.is_empty() || self.grids.iter().any(|g| g[0] == 0 || g[1] == 0) {
            return err("grids: every container needs a non-empty 2-d shape".into());
        }
        if self.total_bins() != self.bin_budget {
            return err(format!(
                "grids: shapes hold {} bins but bin_budget is {}",
                self.total_bins(),
                self.bin_budget
            ));
        }
        match (self.fd_type, self.training, &self.learning) {
            (FdType::Hardcoded, TrainingStrategy::None, None) => {
                if self.n_containers() > 4 {
                    return err("grids: hardcoded descriptors define at most 4 containers".into());
                }
            }
            (FdType::Hardcoded, TrainingStrategy::None, Some(_)) => {
                return err("learning: hardcoded descriptors take no auto-encoder settings".into())
            }
            (FdType::Hardcoded, _, _) => return err("training: hardcoded descriptors require 'none'".into()),
            (_, TrainingStrategy::None, _) => {
                return err("training: learned descriptors require 'pre_trained' or 'online'".into())
            }
            (_, _, None) => return err("learning: learned descriptors need auto-encoder settings".into()),
            (_, _, Some(l)) => {
                if l.topology.latent_dim != 2 {
                    return err("learning: latent_dim must be 2 to match the grids".into());
                }
                l.diversity.validate()?;
                l.training.validate()?;
                if l.period == 0 {
                    return err("period: must be positive".into());
                }
            }
        }
        if self.search.batch_size == 0 || self.search.init_budget < 2 {
            return err("search: batch_size must be positive and init_budget at least 2".into());
        }
        self.search.mutation.validate()?;
        self.search.curiosity.validate()?;
        Ok(())
    }

    pub fn engine_config(&self, seed: u64) -> EngineConfig {
        EngineConfig {
            seed,
            init_budget: self.search.init_budget,
            eval_budget: self.search.eval_budget,
            batch_size: self.search.batch_size,
            sharing: self.sharing,
            training: self.training,
            mutation: self.search.mutation,
            curiosity: self.search.curiosity,
            learning: self.learning.clone(),
        }
    }

    pub fn build_engine(&self, seed: u64) -> Result<Engine> {
        self.validate()?;
        let task = self.task.build()?;
        let pairs = if self.fd_type.is_learned() {
            Vec::new()
        } else {
            fd_pairs_default(task.channels())?
        };
        let specs = self
            .grids
            .iter()
            .enumerate()
            .map(|(i, g)| ContainerSpec {
                shape: g.to_vec(),
                extractor: match self.fd_type {
                    FdType::Hardcoded => DescriptorExtractor::hardcoded(pairs[i].clone()),
                    FdType::Ae => DescriptorExtractor::learned(i, 2, false),
                    FdType::AeQt => DescriptorExtractor::learned(i, 2, true),
                },
            })
            .collect();
        Ok(Engine::new(task, self.engine_config(seed), specs)?)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn message_key(message: &str) -> Option<&str> {
    message.split_once(':').map(|(k, _)| k.trim())
}

/// First line assigning `key` or opening a `[key]` table.
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        let table = t.trim_start_matches('[').trim_end_matches(']');
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
            || (t.starts_with('[') && (table == key || table.ends_with(&format!(".{key}"))))
    })
    .map(|i| i + 1)
}
