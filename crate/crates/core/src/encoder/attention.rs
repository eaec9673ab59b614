use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::activation::{leaky_relu, leaky_relu_grad, prelu, prelu_grad};
use crate::numerics::dense::{axpy, dot};
use crate::numerics::{DenseMatrix, InputGradient, Rng, RowOperand, SparseAdjacency};

/// One attention head: shared projection `W` (`F_in × F'`) and attention
/// kernel `a` (length `2F'`) applied to `[W x_i ‖ W x_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeadParams {
    pub w: DenseMatrix,
    pub a: Vec<f64>,
}

impl AttentionHeadParams {
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let w_bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = DenseMatrix::from_fn(in_dim, out_dim, |_, _| rng.uniform_range(-w_bound, w_bound));
        let a_bound = (6.0 / (2 * out_dim + 1) as f64).sqrt();
        let a = (0..2 * out_dim)
            .map(|_| rng.uniform_range(-a_bound, a_bound))
            .collect();
        Self { w, a }
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    fn check(&self) -> Result<()> {
        if self.a.len() != 2 * self.w.cols() {
            return Err(Error::shape(
                "attention kernel",
                2 * self.w.cols(),
                self.a.len(),
            ));
        }
        Ok(())
    }
}

/// `K` heads averaged, followed by a PReLU with one learned slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    pub heads: Vec<AttentionHeadParams>,
    pub prelu_slope: f64,
    /// Negative slope of the LeakyReLU on attention scores. Not learned.
    pub leaky_slope: f64,
}

impl GatLayerParams {
    pub fn in_dim(&self) -> usize {
        self.heads[0].w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.heads[0].w.cols()
    }

    fn check(&self) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::InvalidArgument(
                "attention layer needs at least one head".into(),
            ));
        }
        let shape = self.heads[0].w.shape();
        for h in &self.heads {
            h.check()?;
            if h.w.shape() != shape {
                return Err(Error::shape(
                    "attention heads",
                    format!("{shape:?}"),
                    format!("{:?}", h.w.shape()),
                ));
            }
        }
        Ok(())
    }

    fn stacked_projection(&self) -> DenseMatrix {
        let blocks: Vec<&DenseMatrix> = self.heads.iter().map(|h| &h.w).collect();
        DenseMatrix::hstack(&blocks).expect("heads share F_in")
    }
}

/// Raw pre-LeakyReLU scores and normalized attention weights, one entry per
/// stored adjacency pair, in CSR order.
#[derive(Clone, Debug)]
pub struct HeadAttention {
    pub raw: Vec<f64>,
    pub alpha: Vec<f64>,
}

fn head_attention(
    h: &DenseMatrix,
    adjacency: &SparseAdjacency,
    a: &[f64],
    leaky_slope: f64,
) -> Result<HeadAttention> {
    let f = h.cols();
    if a.len() != 2 * f {
        return Err(Error::shape("attention kernel", 2 * f, a.len()));
    }
    if h.rows() != adjacency.node_count() {
        return Err(Error::shape(
            "attention input rows",
            adjacency.node_count(),
            h.rows(),
        ));
    }
    let (a_src, a_dst) = a.split_at(f);
    let src: Vec<f64> = (0..h.rows()).map(|i| dot(h.row(i), a_src)).collect();
    let dst: Vec<f64> = (0..h.rows()).map(|j| dot(h.row(j), a_dst)).collect();

    let mut raw = vec![0.0; adjacency.nnz()];
    let mut alpha = vec![0.0; adjacency.nnz()];
    for i in 0..adjacency.node_count() {
        let range = adjacency.row_range(i);
        if range.is_empty() {
            return Err(Error::Structure(format!(
                "node {i} has an empty neighborhood"
            )));
        }
        let nbrs = adjacency.neighbors(i);
        let mut max = f64::NEG_INFINITY;
        for (e, &j) in range.clone().zip(nbrs) {
            raw[e] = src[i] + dst[j];
            alpha[e] = leaky_relu(raw[e], leaky_slope);
            max = max.max(alpha[e]);
        }
        let mut sum = 0.0;
        for e in range.clone() {
            alpha[e] = (alpha[e] - max).exp();
            sum += alpha[e];
        }
        for e in range {
            alpha[e] /= sum;
        }
    }
    Ok(HeadAttention { raw, alpha })
}

/// Per-edge attention weights `α_ij`, normalized over each neighborhood.
/// `h` holds the projected features `W x` row by row.
pub fn attention_coefficients(
    h: &DenseMatrix,
    adjacency: &SparseAdjacency,
    a: &[f64],
    leaky_slope: f64,
) -> Result<Vec<f64>> {
    Ok(head_attention(h, adjacency, a, leaky_slope)?.alpha)
}

fn aggregate(h: &DenseMatrix, adjacency: &SparseAdjacency, alpha: &[f64]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(h.rows(), h.cols());
    for i in 0..adjacency.node_count() {
        let row = out.row_mut(i);
        for (e, &j) in adjacency.row_range(i).zip(adjacency.neighbors(i)) {
            axpy(alpha[e], h.row(j), row);
        }
    }
    out
}

/// `Σ_{j ∈ N_i} α_ij W x_j` for every node. No activation.
pub fn gat_head_forward(
    x: &DenseMatrix,
    adjacency: &SparseAdjacency,
    head: &AttentionHeadParams,
    leaky_slope: f64,
) -> Result<DenseMatrix> {
    head.check()?;
    let h = x.matmul(&head.w)?;
    let att = head_attention(&h, adjacency, &head.a, leaky_slope)?;
    Ok(aggregate(&h, adjacency, &att.alpha))
}

/// `PReLU((1/K) Σ_k Σ_j α^k_ij W^k x_j)`
pub fn gat_layer_forward<X: RowOperand + ?Sized>(
    x: &X,
    adjacency: &SparseAdjacency,
    params: &GatLayerParams,
) -> Result<DenseMatrix> {
    Ok(gat_layer_forward_cached(x, adjacency, params)?.0)
}

#[derive(Clone, Debug)]
pub struct GatLayerCache {
    /// `X · [W¹ | … | Wᴷ]`, `N × K·F'`.
    projected: DenseMatrix,
    stacked_w: DenseMatrix,
    heads: Vec<HeadAttention>,
    /// Head mean before the PReLU.
    pre_activation: DenseMatrix,
}

impl GatLayerCache {
    pub fn head_attention(&self) -> &[HeadAttention] {
        &self.heads
    }

    pub fn pre_activation(&self) -> &DenseMatrix {
        &self.pre_activation
    }

    pub fn push_kinks(&self, out: &mut Vec<u64>) {
        for h in &self.heads {
            out.extend(h.raw.iter().map(|&z| (z >= 0.0) as u64));
        }
        out.extend(
            self.pre_activation
                .as_slice()
                .iter()
                .map(|&v| (v >= 0.0) as u64),
        );
    }
}

pub fn gat_layer_forward_cached<X: RowOperand + ?Sized>(
    x: &X,
    adjacency: &SparseAdjacency,
    params: &GatLayerParams,
) -> Result<(DenseMatrix, GatLayerCache)> {
    params.check()?;
    if x.cols() != params.in_dim() {
        return Err(Error::shape(
            "attention layer input",
            params.in_dim(),
            x.cols(),
        ));
    }
    let f = params.out_dim();
    let k = params.heads.len();
    let stacked_w = params.stacked_projection();
    let projected = x.project(&stacked_w)?;

    let mut pre = DenseMatrix::zeros(x.rows(), f);
    let mut heads = Vec::with_capacity(k);
    for (idx, head) in params.heads.iter().enumerate() {
        let h = projected.column_block(idx * f, f);
        let att = head_attention(&h, adjacency, &head.a, params.leaky_slope)?;
        let agg = aggregate(&h, adjacency, &att.alpha);
        pre.add_assign(&agg)?;
        heads.push(att);
    }
    pre.scale(1.0 / k as f64);

    let mut out = pre.clone();
    out.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = prelu(*v, params.prelu_slope));
    Ok((
        out,
        GatLayerCache {
            projected,
            stacked_w,
            heads,
            pre_activation: pre,
        },
    ))
}

/// Backward pass. Returns the input gradient (factored) and parameter
/// gradients laid out like `params`.
pub fn gat_layer_backward<X: RowOperand + ?Sized>(
    x: &X,
    adjacency: &SparseAdjacency,
    params: &GatLayerParams,
    cache: &GatLayerCache,
    grad_out: &DenseMatrix,
) -> Result<(InputGradient, GatLayerParams)> {
    let n = adjacency.node_count();
    let f = params.out_dim();
    let k = params.heads.len();
    if grad_out.shape() != (n, f) {
        return Err(Error::shape(
            "attention layer backward",
            format!("({n}, {f})"),
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
    d_pre.scale(1.0 / k as f64);

    let mut d_projected = DenseMatrix::zeros(n, k * f);
    let mut head_grads = Vec::with_capacity(k);
    for (idx, (head, att)) in params.heads.iter().zip(&cache.heads).enumerate() {
        let h = cache.projected.column_block(idx * f, f);
        let (a_src, a_dst) = head.a.split_at(f);
        let mut dh = DenseMatrix::zeros(n, f);
        let mut d_src = vec![0.0; n];
        let mut d_dst = vec![0.0; n];
        let mut d_alpha = vec![0.0; adjacency.nnz()];
        for i in 0..n {
            let up = d_pre.row(i);
            for (e, &j) in adjacency.row_range(i).zip(adjacency.neighbors(i)) {
                axpy(att.alpha[e], up, dh.row_mut(j));
                d_alpha[e] = dot(up, h.row(j));
            }
            let range = adjacency.row_range(i);
            let inner: f64 = range.clone().map(|e| att.alpha[e] * d_alpha[e]).sum();
            for (e, &j) in range.zip(adjacency.neighbors(i)) {
                let d_score = att.alpha[e] * (d_alpha[e] - inner);
                let d_raw = d_score * leaky_relu_grad(att.raw[e], params.leaky_slope);
                d_src[i] += d_raw;
                d_dst[j] += d_raw;
            }
        }
        let mut da = vec![0.0; 2 * f];
        for i in 0..n {
            let (da_src, da_dst) = da.split_at_mut(f);
            axpy(d_src[i], h.row(i), da_src);
            axpy(d_dst[i], h.row(i), da_dst);
            let row = dh.row_mut(i);
            axpy(d_src[i], a_src, row);
            axpy(d_dst[i], a_dst, row);
        }
        for i in 0..n {
            d_projected.row_mut(i)[idx * f..(idx + 1) * f].copy_from_slice(dh.row(i));
        }
        head_grads.push(da);
    }

    let d_stacked = x.project_transpose(&d_projected)?;
    let heads = head_grads
        .into_iter()
        .enumerate()
        .map(|(idx, a)| AttentionHeadParams {
            w: d_stacked.column_block(idx * f, f),
            a,
        })
        .collect();
    let grads = GatLayerParams {
        heads,
        prelu_slope: d_slope,
        leaky_slope: 0.0,
    };
    let input_grad = InputGradient::factored(d_projected, cache.stacked_w.clone())?;
    Ok((input_grad, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_graph() -> SparseAdjacency {
        SparseAdjacency::from_edges(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn self_loop_only_gets_full_weight() {
        let adj = SparseAdjacency::from_edges(3, &[(0, 1)]).unwrap();
        let h = DenseMatrix::from_fn(3, 2, |r, c| (r + c) as f64);
        let alpha = attention_coefficients(&h, &adj, &[0.3, -0.2, 0.5, 1.0], 0.2).unwrap();
        assert_eq!(alpha[adj.row_range(2)][0], 1.0);
    }

    #[test]
    fn zero_kernel_is_uniform() {
        let adj = SparseAdjacency::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
        let h = DenseMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        let alpha = attention_coefficients(&h, &adj, &[0.0; 6], 0.2).unwrap();
        for i in 0..4 {
            let deg = adj.neighbors(i).len() as f64;
            for e in adj.row_range(i) {
                assert!((alpha[e] - 1.0 / deg).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_attention_averages_neighbors() {
        let x = DenseMatrix::identity(2);
        let head = AttentionHeadParams {
            w: DenseMatrix::identity(2),
            a: vec![0.0; 4],
        };
        let out = gat_head_forward(&x, &pair_graph(), &head, 0.2).unwrap();
        assert_eq!(out, DenseMatrix::filled(2, 2, 0.5));
    }

    #[test]
    fn isolated_nodes_reproduce_input() {
        let adj = SparseAdjacency::from_edges(3, &[]).unwrap();
        let x = DenseMatrix::from_fn(3, 2, |r, c| r as f64 - c as f64);
        let head = AttentionHeadParams {
            w: DenseMatrix::identity(2),
            a: vec![0.4, -1.0, 2.0, 0.1],
        };
        assert_eq!(gat_head_forward(&x, &adj, &head, 0.2).unwrap(), x);
    }

    #[test]
    fn shape_errors() {
        let x = DenseMatrix::zeros(2, 3);
        let head = AttentionHeadParams {
            w: DenseMatrix::zeros(2, 2),
            a: vec![0.0; 4],
        };
        assert!(gat_head_forward(&x, &pair_graph(), &head, 0.2).is_err());
        let bad_kernel = AttentionHeadParams {
            w: DenseMatrix::zeros(3, 2),
            a: vec![0.0; 3],
        };
        assert!(gat_head_forward(&x, &pair_graph(), &bad_kernel, 0.2).is_err());
    }

    #[test]
    fn identical_heads_equal_single_head() {
        let mut rng = Rng::new(2);
        let adj =
            SparseAdjacency::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        let x = DenseMatrix::from_fn(5, 4, |_, _| rng.uniform_range(-1.0, 1.0));
        let head = AttentionHeadParams::glorot(4, 3, &mut rng);
        let one = GatLayerParams {
            heads: vec![head.clone()],
            prelu_slope: 0.2,
            leaky_slope: 0.2,
        };
        let three = GatLayerParams {
            heads: vec![head.clone(), head.clone(), head.clone()],
            ..one.clone()
        };
        let a = gat_layer_forward(&x, &adj, &one).unwrap();
        let b = gat_layer_forward(&x, &adj, &three).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
        let direct = gat_head_forward(&x, &adj, &head, 0.2).unwrap();
        let mut activated = direct.clone();
        activated
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = prelu(*v, 0.2));
        assert!(a.max_abs_diff(&activated) < 1e-15);
    }
}
