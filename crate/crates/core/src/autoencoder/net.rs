//! Dense layers with hand-written reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Sigmoid,
    Linear,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation and the activation.
    fn derivative(self, pre: f64, act: f64) -> f64 {
        match self {
            Activation::Elu => {
                if pre > 0.0 {
                    1.0
                } else {
                    act + 1.0
                }
            }
            Activation::Sigmoid => act * (1.0 - act),
            Activation::Linear => 1.0,
        }
    }
}

/// A fully connected layer. Weights are stored row-major with shape
/// `inputs × outputs`; dropout applies to the layer's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation, dropout: f64) -> Self {
        Self {
            inputs,
            outputs,
            activation,
            dropout,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn weight_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.inputs, self.outputs), &self.weights)
            .expect("layer weights match declared shape")
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Xavier/Glorot uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn xavier_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let limit = (6.0 / (self.inputs + self.outputs) as f64).sqrt();
        for w in &mut self.weights {
            *w = rng.random_range(-limit..=limit);
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Intermediate values of one forward pass, needed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Build from `(width, activation, dropout)` specs for each layer.
    pub fn new(inputs: usize, spec: &[(usize, Activation, f64)]) -> Self {
        let mut prev = inputs;
        let layers = spec
            .iter()
            .map(|&(width, act, dropout)| {
                let layer = DenseLayer::zeros(prev, width, act, dropout);
                prev = width;
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self.layers.iter().all(|l| {
                l.weights.len() == l.inputs * l.outputs
                    && l.bias.len() == l.outputs
                    && l.weights.iter().chain(&l.bias).all(|v| v.is_finite())
            })
    }

    pub fn xavier_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.xavier_uniform(rng);
        }
    }

    /// Inference pass (dropout disabled).
    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut pre = cur.dot(&layer.weight_view());
            pre += &ArrayView2::from_shape((1, layer.outputs), &layer.bias).unwrap();
            pre.mapv_inplace(|v| layer.activation.apply(v));
            cur = pre;
        }
        cur
    }

    /// Forward pass keeping every intermediate. When `dropout_rng` is given,
    /// dropout masks are sampled with inverted scaling.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        mut dropout_rng: Option<&mut R>,
    ) -> (Array2<f64>, ForwardCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut pre = cur.dot(&layer.weight_view());
            pre += &ArrayView2::from_shape((1, layer.outputs), &layer.bias).unwrap();
            let act = pre.mapv(|v| layer.activation.apply(v));
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if layer.dropout > 0.0 => {
                    let keep = 1.0 - layer.dropout;
                    Some(Array2::from_shape_fn(act.raw_dim(), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    }))
                }
                _ => None,
            };
            let out = match &mask {
                Some(m) => &act * m,
                None => act.clone(),
            };
            caches.push(LayerCache {
                input: std::mem::replace(&mut cur, out),
                pre,
                act,
                mask,
            });
        }
        (cur, ForwardCache { layers: caches })
    }

    /// Back-propagate `d_out` (gradient w.r.t. the network output). Writes
    /// parameter gradients into `grad` (laid out like `write_params`) and
    /// returns the gradient w.r.t. the network input.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>, grad: &mut [f64]) -> Array2<f64> {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut d = d_out;
        for ((layer, lc), &off) in self.layers.iter().zip(&cache.layers).zip(&offsets).rev() {
            if let Some(mask) = &lc.mask {
                d *= mask;
            }
            ndarray::Zip::from(&mut d)
                .and(&lc.pre)
                .and(&lc.act)
                .for_each(|g, &p, &a| *g *= layer.activation.derivative(p, a));
            let dw = lc.input.t().dot(&d);
            let db = d.sum_axis(Axis(0));
            let nw = layer.weights.len();
            let (gw, gb) = grad[off..off + layer.param_count()].split_at_mut(nw);
            gw.iter_mut()
                .zip(dw.iter())
                .for_each(|(g, v)| *g += v);
            gb.iter_mut().zip(db.iter()).for_each(|(g, v)| *g += v);
            d = d.dot(&layer.weight_view().t());
        }
        d
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    /// Load parameters from the front of `src`, returning the unread rest.
    pub fn read_params<'a>(&mut self, mut src: &'a [f64]) -> &'a [f64] {
        for l in &mut self.layers {
            let (w, rest) = src.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, rest) = rest.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            src = rest;
        }
        src
    }
}

pub fn row_matrix(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), cols));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(*src));
    }
    m
}

pub fn column_means(m: &Array2<f64>) -> Array1<f64> {
    m.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(m.ncols()))
}
