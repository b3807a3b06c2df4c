use mcaurora::autoencoder::{AdamConfig, DiversityConfig, ModularAutoEncoder, Topology, TrainingConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn identical_rows_are_learned() {
    let row = [0.1, 0.9, 0.3, 0.7];
    let x = Array2::from_shape_fn((64, 4), |(_, k)| row[k]);
    let constant_loss: f64 = row.iter().map(|v| (v - 0.5f64).powi(2)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let topo = Topology {
        hidden: vec![4],
        latent_dim: 2,
        dropout: 0.0,
    };
    let mut ens = ModularAutoEncoder::xavier(4, 1, &topo, DiversityConfig::NONE, &mut rng).unwrap();
    let cfg = TrainingConfig {
        epochs: 200,
        learning_rate: 0.01,
        batch_size: 16,
        validation_split: 0.25,
        adam: AdamConfig::default(),
    };
    let report = ens.train(&x, &cfg, &mut rng).unwrap();
    assert!(report.diverged.is_none());
    let val = report.validation_loss.last().copied().flatten().unwrap();
    assert!(val < 1e-3 * constant_loss, "{val} vs {constant_loss}");
}
