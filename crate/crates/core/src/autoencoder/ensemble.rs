use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{self, DiversityKind};
use super::net::{Activation, DenseNet, ForwardCache};
use crate::error::{Error, Result};

/// Dense auto-encoder shape: `input → hidden… → latent` for the encoder and
/// the mirror image for the decoder. Hidden layers use ELU and dropout; the
/// latent and reconstruction layers use a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub dropout: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            hidden: vec![16, 5],
            latent_dim: 2,
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityConfig {
    pub kind: DiversityKind,
    /// `+1` adds the diversity term to the reconstruction loss, `-1` subtracts it.
    pub sign: f64,
    pub lambda: f64,
}

impl DiversityConfig {
    pub const NONE: DiversityConfig = DiversityConfig {
        kind: DiversityKind::None,
        sign: 1.0,
        lambda: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::Config(format!("diversity sign must be +1 or -1, got {}", self.sign)));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!("diversity weight must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoEncoderModule {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
}

impl AutoEncoderModule {
    fn new(input_dim: usize, topology: &Topology) -> Self {
        let mut enc_spec: Vec<_> = topology
            .hidden
            .iter()
            .map(|&w| (w, Activation::Elu, topology.dropout))
            .collect();
        enc_spec.push((topology.latent_dim, Activation::Sigmoid, 0.0));
        let mut dec_spec: Vec<_> = topology
            .hidden
            .iter()
            .rev()
            .map(|&w| (w, Activation::Elu, topology.dropout))
            .collect();
        dec_spec.push((input_dim, Activation::Sigmoid, 0.0));
        Self {
            encoder: DenseNet::new(input_dim, &enc_spec),
            decoder: DenseNet::new(topology.latent_dim, &dec_spec),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }
}

/// Per-term breakdown of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub recons: f64,
    pub diversity: f64,
    pub total: f64,
}

/// `M` encoder/decoder pairs trained jointly on one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularAutoEncoder {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub diversity: DiversityConfig,
    pub modules: Vec<AutoEncoderModule>,
}

struct ModuleForward {
    z: Array2<f64>,
    y: Array2<f64>,
    enc: ForwardCache,
    dec: ForwardCache,
}

impl ModularAutoEncoder {
    /// Zero-initialised ensemble.
    pub fn new(
        input_dim: usize,
        n_modules: usize,
        topology: &Topology,
        diversity: DiversityConfig,
    ) -> Result<Self> {
        if n_modules == 0 {
            return Err(Error::Config("an ensemble needs at least one module".into()));
        }
        if input_dim == 0 || topology.latent_dim == 0 {
            return Err(Error::Config("input and latent dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&topology.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", topology.dropout)));
        }
        diversity.validate()?;
        Ok(Self {
            input_dim,
            latent_dim: topology.latent_dim,
            diversity,
            modules: (0..n_modules)
                .map(|_| AutoEncoderModule::new(input_dim, topology))
                .collect(),
        })
    }

    pub fn xavier<R: Rng + ?Sized>(
        input_dim: usize,
        n_modules: usize,
        topology: &Topology,
        diversity: DiversityConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut ens = Self::new(input_dim, n_modules, topology, diversity)?;
        for m in &mut ens.modules {
            m.encoder.xavier_uniform(rng);
            m.decoder.xavier_uniform(rng);
        }
        Ok(ens)
    }

    pub fn n_modules(&self) -> usize {
        self.modules.len()
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().map(AutoEncoderModule::param_count).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.modules.iter().all(|m| {
            m.encoder.is_consistent()
                && m.decoder.is_consistent()
                && m.encoder.inputs() == self.input_dim
                && m.encoder.outputs() == self.latent_dim
                && m.decoder.inputs() == self.latent_dim
                && m.decoder.outputs() == self.input_dim
        })
    }

    fn check_batch(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Structural(format!(
                "batch has {} features, ensemble expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEvaluation("non-finite encoder input".into()));
        }
        Ok(())
    }

    /// Latent codes of module `module` (inference mode).
    pub fn encode(&self, module: usize, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_batch(x)?;
        Ok(self.modules[module].encoder.predict(x))
    }

    /// `(latent, reconstruction)` of module `module` (inference mode).
    pub fn forward(&self, module: usize, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let z = self.encode(module, x)?;
        let y = self.modules[module].decoder.predict(&z);
        Ok((z, y))
    }

    fn infer_all(&self, x: &Array2<f64>) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
        self.check_batch(x)?;
        Ok(self
            .modules
            .iter()
            .map(|m| {
                let z = m.encoder.predict(x);
                let y = m.decoder.predict(&z);
                (z, y)
            })
            .unzip())
    }

    pub fn loss_recons(&self, x: &Array2<f64>) -> Result<f64> {
        let (_, ys) = self.infer_all(x)?;
        Ok(loss::recons(&ys, x))
    }

    pub fn loss_outputs(&self, x: &Array2<f64>) -> Result<f64> {
        let (_, ys) = self.infer_all(x)?;
        Ok(loss::outputs_diversity(&ys))
    }

    pub fn loss_cov(&self, x: &Array2<f64>) -> Result<f64> {
        let (zs, _) = self.infer_all(x)?;
        loss::cov_diversity(&zs)
    }

    pub fn loss_cmd(&self, x: &Array2<f64>) -> Result<f64> {
        let (zs, _) = self.infer_all(x)?;
        loss::cmd_diversity(&zs)
    }

    fn diversity_value(&self, zs: &[Array2<f64>], ys: &[Array2<f64>]) -> Result<f64> {
        match self.diversity.kind {
            DiversityKind::None => Ok(0.0),
            DiversityKind::Outputs => Ok(loss::outputs_diversity(ys)),
            DiversityKind::Cov => loss::cov_diversity(zs),
            DiversityKind::Cmd => loss::cmd_diversity(zs),
        }
    }

    fn combine(&self, recons: f64, diversity: f64) -> f64 {
        match self.diversity.kind {
            DiversityKind::None => recons,
            _ => recons + self.diversity.sign * self.diversity.lambda * diversity,
        }
    }

    fn parts(&self, zs: &[Array2<f64>], ys: &[Array2<f64>], x: &Array2<f64>) -> Result<LossParts> {
        let recons = loss::recons(ys, x);
        let diversity = self.diversity_value(zs, ys)?;
        Ok(LossParts {
            recons,
            diversity,
            total: self.combine(recons, diversity),
        })
    }

    /// `L_recons + sign · λ · L_div` in inference mode.
    pub fn combined_loss(&self, x: &Array2<f64>) -> Result<LossParts> {
        let (zs, ys) = self.infer_all(x)?;
        self.parts(&zs, &ys, x)
    }

    /// Combined loss and its gradient w.r.t. every parameter, laid out as in
    /// `params`. Dropout is active when `dropout_rng` is given.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(LossParts, Vec<f64>)> {
        self.check_batch(x)?;
        let fwd: Vec<ModuleForward> = self
            .modules
            .iter()
            .map(|m| {
                let (z, enc) = m.encoder.forward(x, dropout_rng.as_deref_mut());
                let (y, dec) = m.decoder.forward(&z, dropout_rng.as_deref_mut());
                ModuleForward { z, y, enc, dec }
            })
            .collect();
        let zs: Vec<Array2<f64>> = fwd.iter().map(|f| f.z.clone()).collect();
        let ys: Vec<Array2<f64>> = fwd.iter().map(|f| f.y.clone()).collect();
        let parts = self.parts(&zs, &ys, x)?;

        let mut d_y = loss::recons_grad(&ys, x);
        let weight = self.diversity.sign * self.diversity.lambda;
        let mut d_z: Option<Vec<Array2<f64>>> = None;
        match self.diversity.kind {
            DiversityKind::None => {}
            DiversityKind::Outputs => {
                for (dy, g) in d_y.iter_mut().zip(loss::outputs_diversity_grad(&ys)) {
                    *dy += &(g * weight);
                }
            }
            DiversityKind::Cov => d_z = Some(loss::cov_diversity_grad(&zs)?),
            DiversityKind::Cmd => d_z = Some(loss::cmd_diversity_grad(&zs)?),
        }

        let mut grad = vec![0.0; self.param_count()];
        let mut offset = 0;
        for (k, (m, f)) in self.modules.iter().zip(&fwd).enumerate() {
            let n_enc = m.encoder.param_count();
            let n_dec = m.decoder.param_count();
            let (g_enc, rest) = grad[offset..offset + n_enc + n_dec].split_at_mut(n_enc);
            let mut dz = m.decoder.backward(&f.dec, std::mem::take(&mut d_y[k]), rest);
            if let Some(extra) = &d_z {
                dz += &(&extra[k] * weight);
            }
            m.encoder.backward(&f.enc, dz, g_enc);
            offset += n_enc + n_dec;
        }
        Ok((parts, grad))
    }

    /// Flattened parameters: for each module, encoder then decoder layers,
    /// each layer's weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in &self.modules {
            m.encoder.write_params(&mut out);
            m.decoder.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Structural(format!(
                "{} parameters supplied, ensemble has {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut rest = params;
        for m in &mut self.modules {
            rest = m.encoder.read_params(rest);
            rest = m.decoder.read_params(rest);
        }
        Ok(())
    }

    /// Reorder modules (used to check permutation invariance of the losses).
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        out.modules = order.iter().map(|&i| self.modules[i].clone()).collect();
        out
    }

    pub fn shuffle_modules<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.modules.shuffle(rng);
    }
}
