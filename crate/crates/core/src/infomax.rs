//! Contrastive mutual-information objective: mean readout, bilinear
//! discriminator, row-shuffle corruption and the binary cross-entropy loss.

use serde::{Deserialize, Serialize};

use crate::adaptive::MixedFeatures;
use crate::error::{Error, Result};
use crate::numerics::activation::{sigmoid, softplus};
use crate::numerics::dense::{axpy, dot};
use crate::numerics::{CsrMatrix, DenseMatrix, Rng, SparseAdjacency};

/// Bilinear scorer `σ(zᵀ W t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub w: DenseMatrix,
}

impl DiscriminatorParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: DenseMatrix::zeros(dim, dim),
        }
    }

    pub fn glorot(dim: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (2 * dim) as f64).sqrt();
        Self {
            w: DenseMatrix::from_fn(dim, dim, |_, _| rng.uniform_range(-bound, bound)),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.w.shape() != (dim, dim) {
            return Err(Error::shape(
                "discriminator",
                format!("({dim}, {dim})"),
                format!("{:?}", self.w.shape()),
            ));
        }
        Ok(())
    }
}

/// Column mean of the node embeddings.
pub fn readout(z: &DenseMatrix) -> Result<Vec<f64>> {
    if z.rows() == 0 {
        return Err(Error::InvalidArgument(
            "readout of an empty embedding matrix".into(),
        ));
    }
    let mut t = z.column_sums();
    let inv = 1.0 / z.rows() as f64;
    t.iter_mut().for_each(|v| *v *= inv);
    Ok(t)
}

/// Raw score `zᵀ W t`, before the sigmoid.
pub fn discriminator_logit(z: &[f64], t: &[f64], params: &DiscriminatorParams) -> Result<f64> {
    params.check(z.len())?;
    if t.len() != z.len() {
        return Err(Error::shape("summary vector", z.len(), t.len()));
    }
    Ok(dot(z, &params.w.matvec(t)?))
}

pub fn discriminate(z: &[f64], t: &[f64], params: &DiscriminatorParams) -> Result<f64> {
    Ok(sigmoid(discriminator_logit(z, t, params)?))
}

/// Row-reorderable node feature containers.
pub trait NodeRows: Sized {
    fn node_count(&self) -> usize;
    /// Row `i` of the result is row `order[i]` of `self`.
    fn reorder(&self, order: &[usize]) -> Self;
}

impl NodeRows for DenseMatrix {
    fn node_count(&self) -> usize {
        self.rows()
    }
    fn reorder(&self, order: &[usize]) -> Self {
        self.gather_rows(order)
    }
}

impl NodeRows for CsrMatrix {
    fn node_count(&self) -> usize {
        self.rows()
    }
    fn reorder(&self, order: &[usize]) -> Self {
        self.gather_rows(order)
    }
}

impl NodeRows for MixedFeatures {
    fn node_count(&self) -> usize {
        self.base().rows()
    }
    fn reorder(&self, order: &[usize]) -> Self {
        self.gather_rows(order)
    }
}

/// Negative sample: the clean graph's adjacency paired with shuffled rows.
#[derive(Clone, Debug)]
pub struct CorruptedGraph<'a, X> {
    pub features: X,
    pub adjacency: &'a SparseAdjacency,
    pub permutation: Vec<usize>,
}

impl<X> CorruptedGraph<'_, X> {
    /// Inverse of the applied permutation.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }
}

/// Shuffles node rows uniformly at random; the adjacency is borrowed as is.
pub fn corrupt<'a, X: NodeRows>(
    x: &X,
    adjacency: &'a SparseAdjacency,
    rng: &mut Rng,
) -> Result<CorruptedGraph<'a, X>> {
    if x.node_count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "corruption needs at least 2 nodes, got {}",
            x.node_count()
        )));
    }
    let permutation = rng.permutation(x.node_count());
    corrupt_with_permutation(x, adjacency, permutation)
}

pub fn corrupt_with_permutation<'a, X: NodeRows>(
    x: &X,
    adjacency: &'a SparseAdjacency,
    permutation: Vec<usize>,
) -> Result<CorruptedGraph<'a, X>> {
    let n = x.node_count();
    if adjacency.node_count() != n {
        return Err(Error::shape(
            "corruption adjacency",
            n,
            adjacency.node_count(),
        ));
    }
    if permutation.len() != n {
        return Err(Error::shape("permutation", n, permutation.len()));
    }
    let mut seen = vec![false; n];
    for &p in &permutation {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
    }
    Ok(CorruptedGraph {
        features: x.reorder(&permutation),
        adjacency,
        permutation,
    })
}

/// `L = (1/(N+M)) [Σ softplus(−l_i) + Σ softplus(l̃_j)]` with `l = z·(W t)`,
/// the negated log-likelihood of labeling clean pairs 1 and corrupted pairs 0.
pub fn infomax_loss(
    z_pos: &DenseMatrix,
    z_neg: &DenseMatrix,
    t: &[f64],
    params: &DiscriminatorParams,
) -> Result<f64> {
    Ok(InfomaxPass::with_summary(z_pos, z_neg, t.to_vec(), params)?.loss)
}

/// Forward values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct InfomaxPass {
    pub loss: f64,
    pub summary: Vec<f64>,
    /// `W t`
    pub projected_summary: Vec<f64>,
    pub logits_pos: Vec<f64>,
    pub logits_neg: Vec<f64>,
}

/// Gradients of the loss.
#[derive(Clone, Debug)]
pub struct InfomaxGrads {
    pub z_pos: DenseMatrix,
    pub z_neg: DenseMatrix,
    pub w: DenseMatrix,
}

impl InfomaxPass {
    /// Computes the summary from `z_pos` and evaluates the loss.
    pub fn new(
        z_pos: &DenseMatrix,
        z_neg: &DenseMatrix,
        params: &DiscriminatorParams,
    ) -> Result<Self> {
        Self::with_summary(z_pos, z_neg, readout(z_pos)?, params)
    }

    fn with_summary(
        z_pos: &DenseMatrix,
        z_neg: &DenseMatrix,
        t: Vec<f64>,
        params: &DiscriminatorParams,
    ) -> Result<Self> {
        let d = z_pos.cols();
        params.check(d)?;
        if z_neg.cols() != d {
            return Err(Error::shape("negative embeddings", d, z_neg.cols()));
        }
        if t.len() != d {
            return Err(Error::shape("summary vector", d, t.len()));
        }
        let u = params.w.matvec(&t)?;
        let logits_pos = z_pos.matvec(&u)?;
        let logits_neg = z_neg.matvec(&u)?;
        let total = (logits_pos.len() + logits_neg.len()) as f64;
        let sum: f64 = logits_pos.iter().map(|&l| softplus(-l)).sum::<f64>()
            + logits_neg.iter().map(|&l| softplus(l)).sum::<f64>();
        Ok(Self {
            loss: sum / total,
            summary: t,
            projected_summary: u,
            logits_pos,
            logits_neg,
        })
    }

    /// Backward pass assuming the summary is the readout of `z_pos`, so the
    /// positive gradient includes the path through the summary.
    pub fn backward(
        &self,
        z_pos: &DenseMatrix,
        z_neg: &DenseMatrix,
        params: &DiscriminatorParams,
    ) -> Result<InfomaxGrads> {
        let n = z_pos.rows();
        let d = z_pos.cols();
        let total = (n + z_neg.rows()) as f64;
        let u = &self.projected_summary;

        let mut d_u = vec![0.0; d];
        let mut grad_pos = DenseMatrix::zeros(n, d);
        for (i, &l) in self.logits_pos.iter().enumerate() {
            let dl = (sigmoid(l) - 1.0) / total;
            axpy(dl, u, grad_pos.row_mut(i));
            axpy(dl, z_pos.row(i), &mut d_u);
        }
        let mut grad_neg = DenseMatrix::zeros(z_neg.rows(), d);
        for (j, &l) in self.logits_neg.iter().enumerate() {
            let dl = sigmoid(l) / total;
            axpy(dl, u, grad_neg.row_mut(j));
            axpy(dl, z_neg.row(j), &mut d_u);
        }

        let t = &self.summary;
        let grad_w = DenseMatrix::from_fn(d, d, |r, c| d_u[r] * t[c]);
        let d_t = params.w.transpose_matvec(&d_u)?;
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            axpy(inv_n, &d_t, grad_pos.row_mut(i));
        }
        Ok(InfomaxGrads {
            z_pos: grad_pos,
            z_neg: grad_neg,
            w: grad_w,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uninformative_discriminator_gives_ln2() {
        let z = DenseMatrix::from_fn(4, 3, |r, c| (r * c) as f64 - 1.5);
        let zn = z.gather_rows(&[3, 2, 1, 0]);
        let t = readout(&z).unwrap();
        let l = infomax_loss(&z, &zn, &t, &DiscriminatorParams::zeros(3)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_discriminator_has_vanishing_loss() {
        // t = e1, W = I, so logits are the first embedding column.
        let z = DenseMatrix::from_rows(&[[40.0, 0.0], [40.0, 0.0]]).unwrap();
        let zn = DenseMatrix::from_rows(&[[-40.0, 0.0], [-40.0, 0.0]]).unwrap();
        let p = DiscriminatorParams {
            w: DenseMatrix::identity(2),
        };
        let l = infomax_loss(&z, &zn, &[1.0, 0.0], &p).unwrap();
        assert!(l <= 1e-15, "{l}");
    }

    #[test]
    fn discriminate_basics() {
        let p = DiscriminatorParams {
            w: DenseMatrix::identity(3),
        };
        let e1 = [1.0, 0.0, 0.0];
        assert!((discriminate(&e1, &e1, &p).unwrap() - 0.7310585786300049).abs() < 1e-15);
        assert_eq!(
            discriminate(
                &[3.0, 1.0, 2.0],
                &[1.0, 5.0, 0.0],
                &DiscriminatorParams::zeros(3)
            )
            .unwrap(),
            0.5
        );
        assert!(discriminate(&e1, &[1.0], &p).is_err());
    }

    #[test]
    fn corruption_rejects_tiny_graphs_and_bad_permutations() {
        let adj = SparseAdjacency::from_edges(1, &[]).unwrap();
        assert!(corrupt(&DenseMatrix::zeros(1, 2), &adj, &mut Rng::new(0)).is_err());
        let adj = SparseAdjacency::from_edges(3, &[]).unwrap();
        let x = DenseMatrix::zeros(3, 2);
        assert!(corrupt_with_permutation(&x, &adj, vec![0, 0, 1]).is_err());
        assert!(corrupt_with_permutation(&x, &adj, vec![0, 1]).is_err());
    }

    #[test]
    fn readout_rejects_empty() {
        assert!(readout(&DenseMatrix::zeros(0, 3)).is_err());
    }
}
