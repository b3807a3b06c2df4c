//! Dense auto-encoder ensembles with analytic gradients.

pub mod ensemble;
pub mod loss;
pub mod net;
pub mod train;

pub use ensemble::{AutoEncoderModule, DiversityConfig, LossParts, ModularAutoEncoder, Topology};
pub use loss::DiversityKind;
pub use net::{Activation, DenseLayer, DenseNet};
pub use train::{Adam, AdamConfig, InputScaling, TrainReport, TrainingConfig};
