//! Reconstruction and diversity losses over a batch, each paired with its
//! gradient w.r.t. the module outputs or latent codes.
//!
//! Batches are `B × features` matrices. `outputs[m]` and `latents[m]` hold
//! module `m`'s reconstructions and codes for the same batch.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on standard deviations when forming correlation matrices.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiversityKind {
    None,
    Outputs,
    Cov,
    Cmd,
}

impl DiversityKind {
    pub fn uses_latents(self) -> bool {
        matches!(self, DiversityKind::Cov | DiversityKind::Cmd)
    }
}

/// Mean over modules of each module's mean squared reconstruction error
/// (squared L2 norm per sample, averaged over the batch).
pub fn recons(outputs: &[Array2<f64>], x: &Array2<f64>) -> f64 {
    let m = outputs.len() as f64;
    let b = x.nrows() as f64;
    outputs
        .iter()
        .map(|y| (y - x).mapv(|v| v * v).sum() / b)
        .sum::<f64>()
        / m
}

pub fn recons_grad(outputs: &[Array2<f64>], x: &Array2<f64>) -> Vec<Array2<f64>> {
    let scale = 2.0 / (outputs.len() as f64 * x.nrows() as f64);
    outputs.iter().map(|y| (y - x) * scale).collect()
}

fn ensemble_mean(outputs: &[Array2<f64>]) -> Array2<f64> {
    let mut mean = Array2::zeros(outputs[0].raw_dim());
    for y in outputs {
        mean += y;
    }
    mean / outputs.len() as f64
}

/// Average squared distance of each module's reconstruction from the
/// ensemble-mean reconstruction of the same sample.
pub fn outputs_diversity(outputs: &[Array2<f64>]) -> f64 {
    // Pairwise form of the same quantity; exact zero for identical modules.
    let m = outputs.len() as f64;
    let b = outputs[0].nrows() as f64;
    let mut total = 0.0;
    for (j, yj) in outputs.iter().enumerate() {
        for yk in &outputs[j + 1..] {
            total += ndarray::Zip::from(yj)
                .and(yk)
                .fold(0.0, |acc, &a, &c| acc + (a - c) * (a - c));
        }
    }
    total / (b * m * m)
}

pub fn outputs_diversity_grad(outputs: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let m = outputs.len() as f64;
    let b = outputs[0].nrows() as f64;
    let mean = ensemble_mean(outputs);
    // The mean's own dependence cancels because deviations sum to zero.
    outputs.iter().map(|y| (y - &mean) * (2.0 / (b * m))).collect()
}

fn centered(z: &Array2<f64>) -> Array2<f64> {
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    z - &mean.insert_axis(Axis(0))
}

/// Sample covariance (denominator `B - 1`).
pub fn covariance(z: &Array2<f64>) -> Result<Array2<f64>> {
    let b = z.nrows();
    if b < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: b });
    }
    let zc = centered(z);
    Ok(zc.t().dot(&zc) / (b - 1) as f64)
}

/// Pearson correlation matrix with standard deviations floored at `STD_FLOOR`.
pub fn correlation(z: &Array2<f64>) -> Result<Array2<f64>> {
    let c = covariance(z)?;
    let s: Vec<f64> = c.diag().iter().map(|&v| v.max(0.0).sqrt().max(STD_FLOOR)).collect();
    Ok(Array2::from_shape_fn(c.raw_dim(), |(a, b)| c[[a, b]] / (s[a] * s[b])))
}

/// Gradient w.r.t. `z` of a scalar `L(cov(z))` given `g = dL/dcov`.
fn covariance_backward(z: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let b = z.nrows() as f64;
    let sym = g + &g.t();
    // Centring drops out: the columns of the centred matrix sum to zero.
    centered(z).dot(&sym) / (b - 1.0)
}

/// Gradient w.r.t. `z` of `L(corr(z))` given `g = dL/dcorr`.
fn correlation_backward(z: &Array2<f64>, g: &Array2<f64>) -> Result<Array2<f64>> {
    let c = covariance(z)?;
    let d = c.nrows();
    let raw: Vec<f64> = c.diag().iter().map(|&v| v.max(0.0).sqrt()).collect();
    let s: Vec<f64> = raw.iter().map(|&v| v.max(STD_FLOOR)).collect();
    let r = Array2::from_shape_fn((d, d), |(a, b)| c[[a, b]] / (s[a] * s[b]));
    let mut gc = Array2::from_shape_fn((d, d), |(a, b)| g[[a, b]] / (s[a] * s[b]));
    for k in 0..d {
        if raw[k] <= STD_FLOOR {
            continue;
        }
        let mut ds = 0.0;
        for j in 0..d {
            ds += g[[k, j]] * r[[k, j]] + g[[j, k]] * r[[j, k]];
        }
        ds *= -1.0 / s[k];
        gc[[k, k]] += ds / (2.0 * s[k]);
    }
    Ok(covariance_backward(z, &gc))
}

fn concat_columns(latents: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = latents.iter().map(|z| z.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("latents share the batch size")
}

/// Sum of absolute off-diagonal covariances of all modules' codes taken together.
pub fn cov_diversity(latents: &[Array2<f64>]) -> Result<f64> {
    let c = covariance(&concat_columns(latents))?;
    Ok(c.indexed_iter()
        .filter(|((a, b), _)| a != b)
        .map(|(_, v)| v.abs())
        .sum())
}

pub fn cov_diversity_grad(latents: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
    let z = concat_columns(latents);
    let c = covariance(&z)?;
    let g = Array2::from_shape_fn(c.raw_dim(), |(a, b)| if a == b { 0.0 } else { sign(c[[a, b]]) });
    let dz = covariance_backward(&z, &g);
    let mut out = Vec::with_capacity(latents.len());
    let mut col = 0;
    for l in latents {
        out.push(dz.slice(s![.., col..col + l.ncols()]).to_owned());
        col += l.ncols();
    }
    Ok(out)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn squared_norm(h: &Array2<f64>) -> f64 {
    h.iter().map(|v| v * v).sum()
}

fn trace_product(h1: &Array2<f64>, h2: &Array2<f64>) -> f64 {
    // tr(H1 H2) = sum_ab H1[a,b] H2[b,a]
    h1.indexed_iter().map(|((a, b), v)| v * h2[[b, a]]).sum()
}

/// Correlation matrix distance `1 - tr(H1 H2) / (|H1|_F |H2|_F)`, clamped to `[0, 1]`.
pub fn d_corr(h1: &Array2<f64>, h2: &Array2<f64>) -> Result<f64> {
    if h1.dim() != h2.dim() {
        return Err(Error::Structural(format!(
            "correlation matrices {:?} and {:?} differ in shape",
            h1.dim(),
            h2.dim()
        )));
    }
    let (sq1, sq2) = (squared_norm(h1), squared_norm(h2));
    if sq1 == 0.0 || sq2 == 0.0 {
        return Err(Error::Structural("zero Frobenius norm".into()));
    }
    // sqrt(|H1|^2 |H2|^2) keeps d(H, H) exactly zero for symmetric H.
    Ok((1.0 - trace_product(h1, h2) / (sq1 * sq2).sqrt()).clamp(0.0, 1.0))
}

/// Gradient of the unclamped distance w.r.t. its first argument.
fn d_corr_grad_first(h1: &Array2<f64>, h2: &Array2<f64>) -> Array2<f64> {
    let (n1, n2) = (squared_norm(h1).sqrt(), squared_norm(h2).sqrt());
    let t = trace_product(h1, h2);
    Array2::from_shape_fn(h1.raw_dim(), |(a, b)| {
        -h2[[b, a]] / (n1 * n2) + t * h1[[a, b]] / (n1 * n1 * n1 * n2)
    })
}

/// Sum over ordered pairs of distinct modules of the distance between their
/// latent correlation matrices.
pub fn cmd_diversity(latents: &[Array2<f64>]) -> Result<f64> {
    let rs = latents.iter().map(correlation).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (i, ri) in rs.iter().enumerate() {
        for (j, rj) in rs.iter().enumerate() {
            if i != j {
                total += d_corr(ri, rj)?;
            }
        }
    }
    Ok(total)
}

pub fn cmd_diversity_grad(latents: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
    let rs = latents.iter().map(correlation).collect::<Result<Vec<_>>>()?;
    latents
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mut g = Array2::zeros(rs[i].raw_dim());
            for (j, rj) in rs.iter().enumerate() {
                if i != j {
                    // Both (i, j) and (j, i) terms; the distance is symmetric.
                    g += &(d_corr_grad_first(&rs[i], rj) * 2.0);
                }
            }
            correlation_backward(z, &g)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn recons_examples() {
        let x = array![[1.0, 0.0]];
        assert_eq!(recons(&[x.clone()], &x), 0.0);
        assert_eq!(recons(&[array![[0.0, 0.0]]], &x), 1.0);
    }

    #[test]
    fn outputs_examples() {
        let y1 = array![[1.0, 0.0]];
        let y2 = array![[0.0, 0.0]];
        assert_eq!(outputs_diversity(&[y1.clone()]), 0.0);
        assert_eq!(outputs_diversity(&[y1.clone(), y2]), 0.25);
        assert_eq!(outputs_diversity(&[y1.clone(), y1]), 0.0);
    }

    #[test]
    fn cov_examples() {
        let single = array![[0.1], [0.5], [0.9]];
        assert_eq!(cov_diversity(&[single.clone()]).unwrap(), 0.0);
        // Two identical columns: off-diagonals both equal the variance.
        let var = covariance(&single).unwrap()[[0, 0]];
        let got = cov_diversity(&[single.clone(), single.clone()]).unwrap();
        assert!((got - 2.0 * var).abs() < 1e-15);
        assert!(cov_diversity(&[array![[1.0, 2.0]]]).is_err());
    }

    #[test]
    fn d_corr_examples() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let ones = array![[1.0, 1.0], [1.0, 1.0]];
        assert!((d_corr(&eye, &ones).unwrap() - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(d_corr(&eye, &eye).unwrap(), 0.0);
        assert_eq!(d_corr(&eye, &ones).unwrap(), d_corr(&ones, &eye).unwrap());
        assert!(d_corr(&Array2::zeros((2, 2)), &eye).is_err());
    }

    #[test]
    fn cmd_examples() {
        // Uncorrelated columns give the identity, identical columns give all-ones.
        let ident = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let same = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        let expected = 2.0 * (1.0 - 1.0 / 2f64.sqrt());
        assert!((cmd_diversity(&[ident.clone(), same]).unwrap() - expected).abs() < 1e-12);
        assert_eq!(cmd_diversity(&[ident.clone()]).unwrap(), 0.0);
        assert_eq!(cmd_diversity(&[ident.clone(), ident]).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_column_is_floored() {
        let z = array![[0.3, 1.0], [0.3, 2.0], [0.3, 4.0]];
        let r = correlation(&z).unwrap();
        assert!(r.iter().all(|v| v.is_finite()));
        assert_eq!(r[[0, 1]], 0.0);
    }
}
