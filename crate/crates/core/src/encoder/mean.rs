//! Attention-free aggregator used by the ablation variants: one linear
//! projection, an unweighted mean over each neighborhood, then PReLU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::activation::{prelu, prelu_grad};
use crate::numerics::dense::axpy;
use crate::numerics::{DenseMatrix, InputGradient, Rng, RowOperand, SparseAdjacency};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanLayerParams {
    pub w: DenseMatrix,
    pub prelu_slope: f64,
}

impl MeanLayerParams {
    pub fn glorot(in_dim: usize, out_dim: usize, prelu_init: f64, rng: &mut Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            w: DenseMatrix::from_fn(in_dim, out_dim, |_, _| rng.uniform_range(-bound, bound)),
            prelu_slope: prelu_init,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeanLayerCache {
    pre_activation: DenseMatrix,
}

impl MeanLayerCache {
    pub fn push_kinks(&self, out: &mut Vec<u64>) {
        out.extend(
            self.pre_activation
                .as_slice()
                .iter()
                .map(|&v| (v >= 0.0) as u64),
        );
    }
}

pub fn mean_layer_forward<X: RowOperand + ?Sized>(
    x: &X,
    adjacency: &SparseAdjacency,
    params: &MeanLayerParams,
) -> Result<(DenseMatrix, MeanLayerCache)> {
    if x.cols() != params.w.rows() {
        return Err(Error::shape("mean layer input", params.w.rows(), x.cols()));
    }
    if x.rows() != adjacency.node_count() {
        return Err(Error::shape(
            "mean layer rows",
            adjacency.node_count(),
            x.rows(),
        ));
    }
    let h = x.project(&params.w)?;
    let mut pre = DenseMatrix::zeros(h.rows(), h.cols());
    for i in 0..adjacency.node_count() {
        let nbrs = adjacency.neighbors(i);
        if nbrs.is_empty() {
            return Err(Error::Structure(format!(
                "node {i} has an empty neighborhood"
            )));
        }
        let weight = 1.0 / nbrs.len() as f64;
        let row = pre.row_mut(i);
        for &j in nbrs {
            axpy(weight, h.row(j), row);
        }
    }
    let mut out = pre.clone();
    out.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = prelu(*v, params.prelu_slope));
    Ok((
        out,
        MeanLayerCache {
            pre_activation: pre,
        },
    ))
}

pub fn mean_layer_backward<X: RowOperand + ?Sized>(
    x: &X,
    adjacency: &SparseAdjacency,
    params: &MeanLayerParams,
    cache: &MeanLayerCache,
    grad_out: &DenseMatrix,
) -> Result<(InputGradient, MeanLayerParams)> {
    if grad_out.shape() != cache.pre_activation.shape() {
        return Err(Error::shape(
            "mean layer backward",
            format!("{:?}", cache.pre_activation.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let mut d_slope = 0.0;
    let mut d_pre = grad_out.clone();
    for (d, &p) in d_pre
        .as_mut_slice()
        .iter_mut()
        .zip(cache.pre_activation.as_slice())
    {
        let (dx, ds) = prelu_grad(p, params.prelu_slope);
        d_slope += *d * ds;
        *d *= dx;
    }
    let mut d_h = DenseMatrix::zeros(d_pre.rows(), d_pre.cols());
    for i in 0..adjacency.node_count() {
        let nbrs = adjacency.neighbors(i);
        let weight = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            axpy(weight, d_pre.row(i), d_h.row_mut(j));
        }
    }
    let d_w = x.project_transpose(&d_h)?;
    let grads = MeanLayerParams {
        w: d_w,
        prelu_slope: d_slope,
    };
    Ok((InputGradient::factored(d_h, params.w.clone())?, grads))
}
