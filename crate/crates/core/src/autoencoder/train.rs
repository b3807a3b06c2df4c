use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::ModularAutoEncoder;
use crate::error::{Error, Result};
use crate::types::ObservationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            learning_rate,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_split: f64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(Error::Config(format!(
                "validation split must lie in (0, 1), got {}",
                self.validation_split
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("training batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Size-weighted mean training loss per completed epoch (dropout active).
    pub train_loss: Vec<f64>,
    /// Inference-mode loss on the held-out split, when it has at least two rows.
    pub validation_loss: Vec<Option<f64>>,
    pub train_size: usize,
    pub validation_size: usize,
    /// Set when a non-finite loss aborted training; parameters were restored.
    pub diverged: Option<Divergence>,
}

/// Split indices into mini-batches, folding a trailing single-row batch into
/// its predecessor so batch statistics stay defined.
fn minibatches(indices: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < indices.len() {
        let mut end = (start + batch_size).min(indices.len());
        if indices.len() - end == 1 {
            end = indices.len();
        }
        out.push(&indices[start..end]);
        start = end;
    }
    out
}

impl ModularAutoEncoder {
    /// Mini-batch Adam on the combined loss. The corpus holds one scaled,
    /// flattened observation per row. On a non-finite loss or gradient the
    /// parameters are restored and the report carries the divergence.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        corpus: &Array2<f64>,
        cfg: &TrainingConfig,
        rng: &mut R,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if corpus.nrows() == 0 {
            return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
        }
        if corpus.ncols() != self.input_dim {
            return Err(Error::Structural(format!(
                "corpus has {} features, ensemble expects {}",
                corpus.ncols(),
                self.input_dim
            )));
        }
        let mut order: Vec<usize> = (0..corpus.nrows()).collect();
        order.shuffle(rng);
        let n_val = ((corpus.nrows() as f64) * cfg.validation_split).floor() as usize;
        let n_val = if corpus.nrows() - n_val < 2 { 0 } else { n_val };
        let (val_idx, train_idx) = order.split_at(n_val);
        let mut train_idx = train_idx.to_vec();
        let validation = (val_idx.len() >= 2).then(|| corpus.select(Axis(0), val_idx));

        let initial = self.params();
        let mut params = initial.clone();
        let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.adam);
        let mut report = TrainReport {
            train_size: train_idx.len(),
            validation_size: val_idx.len(),
            ..TrainReport::default()
        };
        let mut step = 0;
        for epoch in 0..cfg.epochs {
            train_idx.shuffle(rng);
            let mut weighted = 0.0;
            for batch_idx in minibatches(&train_idx, cfg.batch_size) {
                let batch = corpus.select(Axis(0), batch_idx);
                let (parts, grad) = self.loss_and_grad(&batch, Some(&mut *rng))?;
                if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    self.set_params(&initial)?;
                    report.diverged = Some(Divergence {
                        epoch,
                        step,
                        loss: parts.total,
                    });
                    return Ok(report);
                }
                adam.step(&mut params, &grad);
                self.set_params(&params)?;
                weighted += parts.total * batch_idx.len() as f64;
                step += 1;
            }
            report.train_loss.push(weighted / train_idx.len() as f64);
            let val = match &validation {
                Some(v) => Some(self.combined_loss(v)?.total),
                None => None,
            };
            if let Some(l) = val.filter(|l| !l.is_finite()) {
                self.set_params(&initial)?;
                report.diverged = Some(Divergence {
                    epoch,
                    step,
                    loss: l,
                });
                return Ok(report);
            }
            report.validation_loss.push(val);
        }
        Ok(report)
    }
}

/// Per-channel min-max scaling of observation matrices, fitted on a corpus
/// and stored with the model so extraction uses identical scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub timepoints: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaling {
    pub fn fit<'a, I>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ObservationMatrix>,
    {
        let mut iter = corpus.into_iter();
        let first = iter
            .next()
            .ok_or(Error::NotEnoughSamples { needed: 1, got: 0 })?;
        let (channels, timepoints) = first.shape();
        let mut lo = vec![f64::INFINITY; channels];
        let mut hi = vec![f64::NEG_INFINITY; channels];
        for m in std::iter::once(first).chain(iter) {
            if m.shape() != (channels, timepoints) {
                return Err(Error::Structural(format!(
                    "observation shape {:?} differs from {:?}",
                    m.shape(),
                    (channels, timepoints)
                )));
            }
            for c in 0..channels {
                for &v in m.channel(c) {
                    lo[c] = lo[c].min(v);
                    hi[c] = hi[c].max(v);
                }
            }
        }
        Ok(Self { timepoints, lo, hi })
    }

    pub fn channels(&self) -> usize {
        self.lo.len()
    }

    pub fn input_dim(&self) -> usize {
        self.channels() * self.timepoints
    }

    /// Scaled, channel-major flattened observations. Constant channels map to 0.
    pub fn apply_into(&self, m: &ObservationMatrix, out: &mut [f64]) -> Result<()> {
        if m.shape() != (self.channels(), self.timepoints) {
            return Err(Error::Structural(format!(
                "observation shape {:?}, model expects {:?}",
                m.shape(),
                (self.channels(), self.timepoints)
            )));
        }
        for c in 0..self.channels() {
            let span = self.hi[c] - self.lo[c];
            for (t, &v) in m.channel(c).iter().enumerate() {
                out[c * self.timepoints + t] = if span > 0.0 {
                    (v - self.lo[c]) / span
                } else {
                    0.0
                };
            }
        }
        Ok(())
    }

    pub fn matrix<'a, I>(&self, items: I) -> Result<Array2<f64>>
    where
        I: IntoIterator<Item = &'a ObservationMatrix>,
        I::IntoIter: ExactSizeIterator,
    {
        let iter = items.into_iter();
        let mut out = Array2::zeros((iter.len(), self.input_dim()));
        for (mut row, m) in out.rows_mut().into_iter().zip(iter) {
            self.apply_into(m, row.as_slice_mut().expect("standard layout"))?;
        }
        Ok(out)
    }
}
