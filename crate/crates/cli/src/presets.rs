//! Named experiment cases at paper and desk scale.

use mcaurora::autoencoder::{AdamConfig, DiversityConfig, DiversityKind, Topology, TrainingConfig};
use mcaurora::engine::{CuriosityConfig, LearningConfig, MutationConfig, SharingStrategy, TrainingStrategy};
use mcaurora::tasks::{TaskConfig, WalkerParams};

use crate::config::{ExperimentConfig, FdType, SearchConfig};
use crate::error::{CliError, Result};

pub const CASES: [&str; 15] = [
    "hardcoded-4",
    "hardcoded-4-ns",
    "pt-reco-4",
    "reco-4",
    "qt-reco-4",
    "qt-reco-4-ns",
    "hardcoded-1",
    "qt-reco-1",
    "qt-reco-6-ns",
    "qt-reco-9-ns",
    "qt-reco-25-ns",
    "qt-outputs-4-ns",
    "qt-covmin-4-ns",
    "qt-covmax-4-ns",
    "qt-cmd-4-ns",
];

/// Divisor applied to the initialisation and evaluation budgets and to the
/// retraining period at desk scale.
pub const DESK_BUDGET_DIVISOR: u64 = 20;
pub const DESK_GRID: [usize; 2] = [10, 10];
pub const DESK_EPOCHS: usize = 200;
pub const DESK_LEARNING_RATE: f64 = 0.01;
pub const DESK_TRAINING_BATCH: usize = 128;
pub const DESK_REPLICATES: usize = 5;
pub const PAPER_REPLICATES: usize = 20;

struct Case {
    fd_type: FdType,
    sharing: SharingStrategy,
    training: TrainingStrategy,
    diversity: DiversityConfig,
    containers: usize,
}

fn diversity(kind: DiversityKind, sign: f64) -> DiversityConfig {
    DiversityConfig { kind, sign, lambda: 1.0 }
}

fn case(name: &str) -> Option<Case> {
    use FdType::*;
    use SharingStrategy::*;
    use TrainingStrategy as T;
    let reco = DiversityConfig::NONE;
    let c = |fd_type, sharing, training, diversity, containers| Case {
        fd_type,
        sharing,
        training,
        diversity,
        containers,
    };
    Some(match name {
        "hardcoded-4" => c(Hardcoded, Shared, T::None, reco, 4),
        "hardcoded-4-ns" => c(Hardcoded, NonShared, T::None, reco, 4),
        "pt-reco-4" => c(Ae, Shared, T::PreTrained, reco, 4),
        "reco-4" => c(Ae, Shared, T::Online, reco, 4),
        "qt-reco-4" => c(AeQt, Shared, T::Online, reco, 4),
        "qt-reco-4-ns" => c(AeQt, NonShared, T::Online, reco, 4),
        "hardcoded-1" => c(Hardcoded, Shared, T::None, reco, 1),
        "qt-reco-1" => c(AeQt, Shared, T::Online, reco, 1),
        "qt-reco-6-ns" => c(AeQt, NonShared, T::Online, reco, 6),
        "qt-reco-9-ns" => c(AeQt, NonShared, T::Online, reco, 9),
        "qt-reco-25-ns" => c(AeQt, NonShared, T::Online, reco, 25),
        "qt-outputs-4-ns" => c(AeQt, NonShared, T::Online, diversity(DiversityKind::Outputs, -1.0), 4),
        "qt-covmin-4-ns" => c(AeQt, NonShared, T::Online, diversity(DiversityKind::Cov, 1.0), 4),
        "qt-covmax-4-ns" => c(AeQt, NonShared, T::Online, diversity(DiversityKind::Cov, -1.0), 4),
        "qt-cmd-4-ns" => c(AeQt, NonShared, T::Online, diversity(DiversityKind::Cmd, 1.0), 4),
        _ => return None,
    })
}

/// Grid shapes splitting 2500 bins over `n` containers.
fn paper_grids(n: usize) -> Vec<[usize; 2]> {
    match n {
        1 => vec![[50, 50]],
        4 => vec![[25, 25]; 4],
        6 => [vec![[20, 20]; 5], vec![[20, 25]]].concat(),
        9 => [vec![[17, 16]; 8], vec![[18, 18]]].concat(),
        25 => vec![[10, 10]; 25],
        _ => unreachable!("no paper split for {n} containers"),
    }
}

pub fn preset(name: &str, desk: bool) -> Result<ExperimentConfig> {
    let c = case(name).ok_or_else(|| CliError::UnknownPreset(name.to_string()))?;
    let grids = if desk {
        vec![DESK_GRID; c.containers]
    } else {
        paper_grids(c.containers)
    };
    let div = if desk { DESK_BUDGET_DIVISOR } else { 1 };
    let learning = c.fd_type.is_learned().then(|| LearningConfig {
        topology: Topology::default(),
        diversity: c.diversity,
        training: TrainingConfig {
            epochs: if desk { DESK_EPOCHS } else { 200 },
            learning_rate: if desk { DESK_LEARNING_RATE } else { 0.1 },
            batch_size: if desk { DESK_TRAINING_BATCH } else { 1024 },
            validation_split: 0.25,
            adam: AdamConfig::default(),
        },
        period: 5000 / div as usize,
        n_quantiles: 1000,
    });
    Ok(ExperimentConfig {
        case: name.to_string(),
        seed: 0,
        replicates: if desk { DESK_REPLICATES } else { PAPER_REPLICATES },
        output_dir: None,
        bin_budget: grids.iter().map(|g| g[0] * g[1]).sum(),
        fd_type: c.fd_type,
        sharing: c.sharing,
        training: c.training,
        grids,
        task: TaskConfig::Walker(WalkerParams::default()),
        search: SearchConfig {
            init_budget: 10_000 / div as usize,
            eval_budget: 100_000 / div,
            batch_size: if desk { 100 } else { 1000 },
            mutation: MutationConfig { p_mut: 0.1, eta: 20.0 },
            curiosity: CuriosityConfig::default(),
        },
        learning,
    })
}
