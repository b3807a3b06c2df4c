//! Multi-container quality-diversity search whose grid descriptors are learned
//! online by an ensemble of modular auto-encoders.

pub mod autoencoder;
pub mod container;
pub mod descriptors;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod quantile;
pub mod rng;
pub mod tasks;
pub mod types;

pub use container::{AddOutcome, DepotContainer, GridContainer};
pub use error::{Error, Result};
pub use quantile::QuantileTransform;
pub use types::{Evaluation, Genome, ObservationMatrix, Solution, SolutionId};
