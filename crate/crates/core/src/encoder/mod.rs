//! Graph encoders: a stack of multi-head attention layers, or the
//! attention-free mean aggregator used when attention is ablated.

pub mod attention;
pub mod mean;

use serde::{Deserialize, Serialize};

pub use attention::{
    attention_coefficients, gat_head_forward, gat_layer_backward, gat_layer_forward,
    gat_layer_forward_cached, AttentionHeadParams, GatLayerCache, GatLayerParams,
};
pub use mean::{mean_layer_backward, mean_layer_forward, MeanLayerCache, MeanLayerParams};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, InputGradient, Rng, RowOperand, SparseAdjacency};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub heads: usize,
    pub head_dim: usize,
    pub leaky_slope: f64,
    pub prelu_init: f64,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            heads: 6,
            head_dim: 10,
            leaky_slope: 0.2,
            prelu_init: 0.2,
            layers: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 || self.layers == 0 {
            return Err(Error::Config(format!(
                "encoder needs heads, head_dim and layers >= 1 (got {}, {}, {})",
                self.heads, self.head_dim, self.layers
            )));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Config(format!(
                "leaky_slope must be in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        if !self.prelu_init.is_finite() {
            return Err(Error::Config("prelu_init must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Attention,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EncoderParams {
    Attention(Vec<GatLayerParams>),
    Mean(Vec<MeanLayerParams>),
}

#[derive(Clone, Debug)]
enum LayerCache {
    Attention(GatLayerCache),
    Mean(MeanLayerCache),
}

/// Intermediate values of one encoder forward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache {
    layers: Vec<LayerCache>,
    /// Output of every layer except the last, which is the returned value.
    hidden: Vec<DenseMatrix>,
}

impl EncoderCache {
    pub fn push_kinks(&self, out: &mut Vec<u64>) {
        for layer in &self.layers {
            match layer {
                LayerCache::Attention(c) => c.push_kinks(out),
                LayerCache::Mean(c) => c.push_kinks(out),
            }
        }
    }

    pub fn attention(&self) -> impl Iterator<Item = &GatLayerCache> {
        self.layers.iter().filter_map(|l| match l {
            LayerCache::Attention(c) => Some(c),
            LayerCache::Mean(_) => None,
        })
    }
}

impl EncoderParams {
    pub fn init(
        kind: EncoderKind,
        config: &EncoderConfig,
        in_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let f = config.head_dim;
        let dims = (0..config.layers).map(|l| if l == 0 { in_dim } else { f });
        Ok(match kind {
            EncoderKind::Attention => EncoderParams::Attention(
                dims.map(|d| GatLayerParams {
                    heads: (0..config.heads)
                        .map(|_| AttentionHeadParams::glorot(d, f, rng))
                        .collect(),
                    prelu_slope: config.prelu_init,
                    leaky_slope: config.leaky_slope,
                })
                .collect(),
            ),
            EncoderKind::Mean => EncoderParams::Mean(
                dims.map(|d| MeanLayerParams::glorot(d, f, config.prelu_init, rng))
                    .collect(),
            ),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            EncoderParams::Attention(_) => EncoderKind::Attention,
            EncoderParams::Mean(_) => EncoderKind::Mean,
        }
    }

    pub fn layer_count(&self) -> usize {
        match self {
            EncoderParams::Attention(l) => l.len(),
            EncoderParams::Mean(l) => l.len(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            EncoderParams::Attention(l) => l[0].in_dim(),
            EncoderParams::Mean(l) => l[0].w.rows(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            EncoderParams::Attention(l) => l[l.len() - 1].out_dim(),
            EncoderParams::Mean(l) => l[l.len() - 1].w.cols(),
        }
    }

    pub fn forward<X: RowOperand + ?Sized>(
        &self,
        x: &X,
        adjacency: &SparseAdjacency,
    ) -> Result<(DenseMatrix, EncoderCache)> {
        let mut layers = Vec::with_capacity(self.layer_count());
        let mut hidden: Vec<DenseMatrix> = Vec::new();
        for l in 0..self.layer_count() {
            let (out, cache) = match (self, hidden.last()) {
                (EncoderParams::Attention(p), None) => {
                    let (o, c) = gat_layer_forward_cached(x, adjacency, &p[l])?;
                    (o, LayerCache::Attention(c))
                }
                (EncoderParams::Attention(p), Some(h)) => {
                    let (o, c) = gat_layer_forward_cached(h, adjacency, &p[l])?;
                    (o, LayerCache::Attention(c))
                }
                (EncoderParams::Mean(p), None) => {
                    let (o, c) = mean_layer_forward(x, adjacency, &p[l])?;
                    (o, LayerCache::Mean(c))
                }
                (EncoderParams::Mean(p), Some(h)) => {
                    let (o, c) = mean_layer_forward(h, adjacency, &p[l])?;
                    (o, LayerCache::Mean(c))
                }
            };
            layers.push(cache);
            hidden.push(out);
        }
        let out = hidden.pop().expect("at least one layer");
        Ok((out, EncoderCache { layers, hidden }))
    }

    /// Returns the gradient with respect to the encoder input and parameter
    /// gradients shaped like `self`.
    pub fn backward<X: RowOperand + ?Sized>(
        &self,
        x: &X,
        adjacency: &SparseAdjacency,
        cache: &EncoderCache,
        grad_out: &DenseMatrix,
    ) -> Result<(InputGradient, EncoderParams)> {
        let n_layers = self.layer_count();
        let mut grad = grad_out.clone();
        let mut att_grads = Vec::new();
        let mut mean_grads = Vec::new();
        for l in (0..n_layers).rev() {
            let (input_grad, is_first) = match (self, &cache.layers[l]) {
                (EncoderParams::Attention(p), LayerCache::Attention(c)) => {
                    let (ig, g) = if l == 0 {
                        gat_layer_backward(x, adjacency, &p[l], c, &grad)?
                    } else {
                        gat_layer_backward(&cache.hidden[l - 1], adjacency, &p[l], c, &grad)?
                    };
                    att_grads.push(g);
                    (ig, l == 0)
                }
                (EncoderParams::Mean(p), LayerCache::Mean(c)) => {
                    let (ig, g) = if l == 0 {
                        mean_layer_backward(x, adjacency, &p[l], c, &grad)?
                    } else {
                        mean_layer_backward(&cache.hidden[l - 1], adjacency, &p[l], c, &grad)?
                    };
                    mean_grads.push(g);
                    (ig, l == 0)
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "encoder cache does not match parameters".into(),
                    ))
                }
            };
            if is_first {
                att_grads.reverse();
                mean_grads.reverse();
                let grads = match self {
                    EncoderParams::Attention(_) => EncoderParams::Attention(att_grads),
                    EncoderParams::Mean(_) => EncoderParams::Mean(mean_grads),
                };
                return Ok((input_grad, grads));
            }
            grad = input_grad.into_dense();
        }
        unreachable!("encoder has at least one layer")
    }

    /// Visits every learnable scalar in a fixed order. The LeakyReLU slope
    /// is a constant and is skipped.
    pub fn visit(&self, f: &mut dyn FnMut(f64)) {
        match self {
            EncoderParams::Attention(layers) => {
                for layer in layers {
                    for head in &layer.heads {
                        head.w.as_slice().iter().for_each(|&v| f(v));
                        head.a.iter().for_each(|&v| f(v));
                    }
                    f(layer.prelu_slope);
                }
            }
            EncoderParams::Mean(layers) => {
                for layer in layers {
                    layer.w.as_slice().iter().for_each(|&v| f(v));
                    f(layer.prelu_slope);
                }
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        match self {
            EncoderParams::Attention(layers) => {
                for layer in layers {
                    for head in &mut layer.heads {
                        head.w.as_mut_slice().iter_mut().for_each(&mut *f);
                        head.a.iter_mut().for_each(&mut *f);
                    }
                    f(&mut layer.prelu_slope);
                }
            }
            EncoderParams::Mean(layers) => {
                for layer in layers {
                    layer.w.as_mut_slice().iter_mut().for_each(&mut *f);
                    f(&mut layer.prelu_slope);
                }
            }
        }
    }
}
