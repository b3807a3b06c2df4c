//! Feature-descriptor extraction: hardcoded channel reductions or learned
//! encoder latents with optional quantile post-processing.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{InputScaling, ModularAutoEncoder};
use crate::error::{Error, Result};
use crate::quantile::QuantileTransform;
use crate::tasks::ChannelInfo;
use crate::types::ObservationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Final,
    MeanAbs,
    /// Fraction of timepoints strictly above the threshold.
    FractionAbove(f64),
}

impl Reduction {
    pub fn apply(self, series: &[f64]) -> f64 {
        let n = series.len() as f64;
        match self {
            Reduction::Mean => series.iter().sum::<f64>() / n,
            Reduction::Final => *series.last().expect("non-empty series"),
            Reduction::MeanAbs => series.iter().map(|v| v.abs()).sum::<f64>() / n,
            Reduction::FractionAbove(t) => series.iter().filter(|&&v| v > t).count() as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelReduction {
    pub channel: usize,
    pub reduction: Reduction,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardcodedSpec {
    pub name: String,
    pub components: Vec<ChannelReduction>,
}

impl HardcodedSpec {
    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    pub fn extract(&self, obs: &ObservationMatrix) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|c| {
                if c.channel >= obs.channels() {
                    return Err(Error::Structural(format!(
                        "descriptor '{}' reads channel {} of a {}-channel observation",
                        self.name,
                        c.channel,
                        obs.channels()
                    )));
                }
                let v = c.reduction.apply(obs.channel(c.channel));
                Ok(((v - c.lo) / (c.hi - c.lo)).clamp(0.0, 1.0))
            })
            .collect()
    }
}

fn lookup(catalog: &[ChannelInfo], name: &str) -> Result<(usize, (f64, f64))> {
    catalog
        .iter()
        .position(|c| c.name == name)
        .map(|i| (i, catalog[i].bounds))
        .ok_or_else(|| Error::Config(format!("task has no '{name}' channel")))
}

fn component(catalog: &[ChannelInfo], name: &str, reduction: Reduction) -> Result<ChannelReduction> {
    let (channel, (lo, hi)) = lookup(catalog, name)?;
    Ok(ChannelReduction {
        channel,
        reduction,
        lo,
        hi,
    })
}

/// The four hand-designed descriptor pairs: distance vs body angle, effort
/// vs airborne fraction, then hip vs knee angle for each leg.
pub fn fd_pairs_default(catalog: &[ChannelInfo]) -> Result<Vec<HardcodedSpec>> {
    let pair = |name: &str, a: (&str, Reduction), b: (&str, Reduction)| -> Result<HardcodedSpec> {
        Ok(HardcodedSpec {
            name: name.to_string(),
            components: vec![component(catalog, a.0, a.1)?, component(catalog, b.0, b.1)?],
        })
    };
    Ok(vec![
        pair(
            "distance_body_angle",
            ("displacement", Reduction::Final),
            ("body_angle", Reduction::Mean),
        )?,
        pair("effort_jump", ("effort", Reduction::Mean), ("airborne", Reduction::Mean))?,
        pair("leg0_hip_knee", ("hip0", Reduction::Mean), ("knee0", Reduction::Mean))?,
        pair("leg1_hip_knee", ("hip1", Reduction::Mean), ("knee1", Reduction::Mean))?,
    ])
}

/// Trained descriptor model: input scaling, the ensemble, and one optional
/// quantile transform per module. Serialises to JSON with exact float
/// round-trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedModel {
    pub scaling: InputScaling,
    pub ensemble: ModularAutoEncoder,
    pub quantiles: Vec<Option<QuantileTransform>>,
}

impl LearnedModel {
    pub fn n_modules(&self) -> usize {
        self.ensemble.n_modules()
    }

    /// Raw sigmoid latents of `module` for each observation, one row each.
    pub fn latents(&self, module: usize, obs: &[&ObservationMatrix]) -> Result<Array2<f64>> {
        let x = self.scaling.matrix(obs.iter().copied())?;
        self.ensemble.encode(module, &x)
    }

    /// Descriptors of `module` for each observation: raw latents, or their
    /// quantile transform when `quantile` is set.
    pub fn descriptors(
        &self,
        module: usize,
        obs: &[&ObservationMatrix],
        quantile: bool,
    ) -> Result<Vec<Vec<f64>>> {
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        let qt = match (quantile, self.quantiles.get(module).and_then(Option::as_ref)) {
            (false, _) => None,
            (true, Some(qt)) => Some(qt),
            (true, None) => {
                return Err(Error::Config(format!("module {module} has no fitted quantile transform")))
            }
        };
        let z = self.latents(module, obs)?;
        z.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                match qt {
                    Some(qt) => qt.apply(&row),
                    None => Ok(row),
                }
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text)?;
        if !model.ensemble.is_consistent() || model.quantiles.len() != model.n_modules() {
            return Err(Error::Structural(format!("inconsistent checkpoint {}", path.display())));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorKind {
    Hardcoded(HardcodedSpec),
    /// Container bound to ensemble module `module`.
    Learned { module: usize, quantile: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorExtractor {
    pub kind: ExtractorKind,
    pub out_dim: usize,
}

impl DescriptorExtractor {
    pub fn hardcoded(spec: HardcodedSpec) -> Self {
        Self {
            out_dim: spec.out_dim(),
            kind: ExtractorKind::Hardcoded(spec),
        }
    }

    pub fn learned(module: usize, out_dim: usize, quantile: bool) -> Self {
        Self {
            kind: ExtractorKind::Learned { module, quantile },
            out_dim,
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.kind, ExtractorKind::Learned { .. })
    }

    /// Descriptors for a batch of observations.
    pub fn extract_batch(
        &self,
        obs: &[&ObservationMatrix],
        model: Option<&LearnedModel>,
    ) -> Result<Vec<Vec<f64>>> {
        let out = match &self.kind {
            ExtractorKind::Hardcoded(spec) => obs.iter().map(|o| spec.extract(o)).collect::<Result<Vec<_>>>()?,
            ExtractorKind::Learned { module, quantile } => {
                let model = model.ok_or_else(|| {
                    Error::Config("learned descriptor requested before any model was trained".into())
                })?;
                if *module >= model.n_modules() {
                    return Err(Error::Structural(format!(
                        "container bound to module {module} of a {}-module ensemble",
                        model.n_modules()
                    )));
                }
                model.descriptors(*module, obs, *quantile)?
            }
        };
        if let Some(bad) = out.iter().find(|fd| fd.len() != self.out_dim) {
            return Err(Error::Structural(format!(
                "extractor produced {} dims, container expects {}",
                bad.len(),
                self.out_dim
            )));
        }
        Ok(out)
    }

    pub fn extract(&self, obs: &ObservationMatrix, model: Option<&LearnedModel>) -> Result<Vec<f64>> {
        Ok(self.extract_batch(&[obs], model)?.remove(0))
    }
}
