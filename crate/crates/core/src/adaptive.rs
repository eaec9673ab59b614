//! Adaptive feature layer.
//!
//! The output is a softmax-weighted mixture of three `N × F` maps: the
//! original features, the max-pooled features and the average-pooled
//! features,
//!
//! ```text
//! F = α₁·X + α₂·max_pool(X) + α₃·avg_pool(X),    α = softmax(w)
//! ```
//!
//! With the default [`PoolAxis::Nodes`] the pooled maps are column
//! statistics over all nodes (one `1 × F` row, broadcast to every node).
//! [`PoolAxis::Features`] pools each node's row instead and broadcasts the
//! scalar across that row.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::activation::softmax;
use crate::numerics::{CsrMatrix, DenseMatrix, InputGradient, RowOperand};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolAxis {
    #[default]
    Nodes,
    Features,
}

impl PoolAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolAxis::Nodes => "nodes",
            PoolAxis::Features => "features",
        }
    }
}

impl FromStr for PoolAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodes" => Ok(PoolAxis::Nodes),
            "features" => Ok(PoolAxis::Features),
            other => Err(Error::Config(format!(
                "unknown pool axis {other:?} (nodes|features)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveFeatureParams {
    pub w: [f64; 3],
    /// Frozen weights receive no gradient.
    pub frozen: bool,
}

impl Default for AdaptiveFeatureParams {
    fn default() -> Self {
        Self {
            w: [0.0; 3],
            frozen: false,
        }
    }
}

impl AdaptiveFeatureParams {
    pub fn new(w: [f64; 3]) -> Self {
        Self { w, frozen: false }
    }

    /// Normalized mixing weights `softmax(w)`.
    pub fn alpha(&self) -> [f64; 3] {
        let a = softmax(&self.w);
        [a[0], a[1], a[2]]
    }

    fn validate(&self) -> Result<()> {
        if self.w.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "adaptive weights must be finite, got {:?}",
                self.w
            )))
        }
    }
}

/// Column-wise maximum over nodes.
pub fn pool_max(x: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(CsrMatrix::from_dense(x).column_max()?.0)
}

/// Column-wise mean over nodes.
pub fn pool_avg(x: &DenseMatrix) -> Result<Vec<f64>> {
    CsrMatrix::from_dense(x).column_mean()
}

/// Dense form of the layer, pooling over nodes.
pub fn adaptive_mix(x: &DenseMatrix, params: &AdaptiveFeatureParams) -> Result<DenseMatrix> {
    Ok(adaptive_forward(&CsrMatrix::from_dense(x), params, PoolAxis::Nodes)?.to_dense())
}

/// Output of the adaptive layer, kept as `α₁·base + broadcast offset`.
///
/// `base` stays sparse, so projecting the mixture costs one sparse product
/// plus a rank-one correction.
#[derive(Clone, Debug)]
pub struct MixedFeatures {
    base: CsrMatrix,
    alpha: [f64; 3],
    axis: PoolAxis,
    pooled_max: Vec<f64>,
    pooled_avg: Vec<f64>,
    max_arg: Vec<usize>,
}

/// Runs the layer on (possibly dropped-out) sparse features.
pub fn adaptive_forward(
    x: &CsrMatrix,
    params: &AdaptiveFeatureParams,
    axis: PoolAxis,
) -> Result<MixedFeatures> {
    params.validate()?;
    let ((pooled_max, max_arg), pooled_avg) = match axis {
        PoolAxis::Nodes => (x.column_max()?, x.column_mean()?),
        PoolAxis::Features => (x.row_max()?, x.row_mean()?),
    };
    Ok(MixedFeatures {
        base: x.clone(),
        alpha: params.alpha(),
        axis,
        pooled_max,
        pooled_avg,
        max_arg,
    })
}

/// Gradient of the loss with respect to `w`, given the upstream gradient for
/// the layer output.
pub fn adaptive_backward(mixed: &MixedFeatures, grad: &InputGradient) -> Result<[f64; 3]> {
    let d_alpha = mixed.alpha_gradient(grad)?;
    let a = mixed.alpha;
    let inner: f64 = (0..3).map(|k| a[k] * d_alpha[k]).sum();
    Ok([
        a[0] * (d_alpha[0] - inner),
        a[1] * (d_alpha[1] - inner),
        a[2] * (d_alpha[2] - inner),
    ])
}

impl MixedFeatures {
    /// Raw features passed through unchanged (`α = (1, 0, 0)`), used when the
    /// layer is switched off.
    pub fn passthrough(x: &CsrMatrix) -> Self {
        Self {
            base: x.clone(),
            alpha: [1.0, 0.0, 0.0],
            axis: PoolAxis::Nodes,
            pooled_max: vec![0.0; x.cols()],
            pooled_avg: vec![0.0; x.cols()],
            max_arg: vec![0; x.cols()],
        }
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    pub fn axis(&self) -> PoolAxis {
        self.axis
    }

    pub fn pooled_max(&self) -> &[f64] {
        &self.pooled_max
    }

    pub fn pooled_avg(&self) -> &[f64] {
        &self.pooled_avg
    }

    pub fn base(&self) -> &CsrMatrix {
        &self.base
    }

    /// `α₂·max + α₃·avg`, one entry per column (node axis) or per row
    /// (feature axis).
    pub fn offset(&self) -> Vec<f64> {
        self.pooled_max
            .iter()
            .zip(&self.pooled_avg)
            .map(|(m, a)| self.alpha[1] * m + self.alpha[2] * a)
            .collect()
    }

    /// Argmax picks of the max pool, for kink signatures.
    pub fn max_arg(&self) -> &[usize] {
        &self.max_arg
    }

    /// Rows gathered in the given order, pooled statistics carried along.
    pub fn gather_rows(&self, order: &[usize]) -> Self {
        let (pooled_max, pooled_avg, max_arg) = match self.axis {
            PoolAxis::Nodes => (
                self.pooled_max.clone(),
                self.pooled_avg.clone(),
                self.max_arg.clone(),
            ),
            PoolAxis::Features => (
                order.iter().map(|&o| self.pooled_max[o]).collect(),
                order.iter().map(|&o| self.pooled_avg[o]).collect(),
                order.iter().map(|&o| self.max_arg[o]).collect(),
            ),
        };
        Self {
            base: self.base.gather_rows(order),
            alpha: self.alpha,
            axis: self.axis,
            pooled_max,
            pooled_avg,
            max_arg,
        }
    }

    fn check_grad(&self, grad: &InputGradient) -> Result<()> {
        let want = (self.base.rows(), self.base.cols());
        if grad.shape() != want {
            return Err(Error::shape(
                "adaptive backward",
                format!("{want:?}"),
                format!("{:?}", grad.shape()),
            ));
        }
        Ok(())
    }

    /// `∂L/∂α` for the three mixture weights.
    pub fn alpha_gradient(&self, grad: &InputGradient) -> Result<[f64; 3]> {
        self.check_grad(grad)?;
        let d_orig = grad.inner_with_sparse(&self.base);
        let sums = match self.axis {
            PoolAxis::Nodes => grad.column_sums(),
            PoolAxis::Features => grad.row_sums(),
        };
        let d_max: f64 = sums.iter().zip(&self.pooled_max).map(|(s, m)| s * m).sum();
        let d_avg: f64 = sums.iter().zip(&self.pooled_avg).map(|(s, a)| s * a).sum();
        Ok([d_orig, d_max, d_avg])
    }

    /// `∂L/∂X` for the layer input, dense. Max-pool gradient goes to the
    /// first argmax.
    pub fn input_gradient(&self, grad: &InputGradient) -> Result<DenseMatrix> {
        self.check_grad(grad)?;
        let [a1, a2, a3] = self.alpha;
        let mut dx = grad.to_dense();
        dx.scale(a1);
        let (n, f) = (self.base.rows(), self.base.cols());
        match self.axis {
            PoolAxis::Nodes => {
                let sums = grad.column_sums();
                for c in 0..f {
                    let r = self.max_arg[c];
                    dx.set(r, c, dx.get(r, c) + a2 * sums[c]);
                    for r in 0..n {
                        dx.set(r, c, dx.get(r, c) + a3 * sums[c] / n as f64);
                    }
                }
            }
            PoolAxis::Features => {
                let sums = grad.row_sums();
                for r in 0..n {
                    let c = self.max_arg[r];
                    dx.set(r, c, dx.get(r, c) + a2 * sums[r]);
                    for c in 0..f {
                        dx.set(r, c, dx.get(r, c) + a3 * sums[r] / f as f64);
                    }
                }
            }
        }
        Ok(dx)
    }
}

impl RowOperand for MixedFeatures {
    fn rows(&self) -> usize {
        self.base.rows()
    }

    fn cols(&self) -> usize {
        self.base.cols()
    }

    fn project(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.base.matmul_dense(w)?;
        out.scale(self.alpha[0]);
        let offset = self.offset();
        match self.axis {
            PoolAxis::Nodes => {
                // every row gets offsetᵀ · W
                let shift = w.transpose_matvec(&offset)?;
                for r in 0..out.rows() {
                    for (o, s) in out.row_mut(r).iter_mut().zip(&shift) {
                        *o += s;
                    }
                }
            }
            PoolAxis::Features => {
                // row i gets offset[i] · (1ᵀ W)
                let col_sums = w.column_sums();
                for r in 0..out.rows() {
                    let s = offset[r];
                    for (o, c) in out.row_mut(r).iter_mut().zip(&col_sums) {
                        *o += s * c;
                    }
                }
            }
        }
        Ok(out)
    }

    fn project_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.base.transpose_matmul_dense(g)?;
        out.scale(self.alpha[0]);
        let offset = self.offset();
        match self.axis {
            PoolAxis::Nodes => {
                let g_sums = g.column_sums();
                for c in 0..out.rows() {
                    let s = offset[c];
                    for (o, gs) in out.row_mut(c).iter_mut().zip(&g_sums) {
                        *o += s * gs;
                    }
                }
            }
            PoolAxis::Features => {
                let weighted = g.transpose_matvec(&offset)?;
                for c in 0..out.rows() {
                    for (o, w) in out.row_mut(c).iter_mut().zip(&weighted) {
                        *o += w;
                    }
                }
            }
        }
        Ok(out)
    }

    fn to_dense(&self) -> DenseMatrix {
        let mut out = self.base.to_dense();
        out.scale(self.alpha[0]);
        let offset = self.offset();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            match self.axis {
                PoolAxis::Nodes => row.iter_mut().zip(&offset).for_each(|(v, o)| *v += o),
                PoolAxis::Features => row.iter_mut().for_each(|v| *v += offset[r]),
            }
        }
        out
    }
}
