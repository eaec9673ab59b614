//! Independent scalar-loop reference implementations. Nothing here calls the
//! library's kernels; inputs are plain nested vectors.
#![allow(dead_code)]

pub mod checks;

use afpgnn::numerics::{DenseMatrix, Rng, SparseAdjacency};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &DenseMatrix) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, Vec::len)), b.shape());
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

/// Dense 0/1 adjacency including the stored self-loops.
pub fn dense_adjacency(adj: &SparseAdjacency) -> Vec<Vec<bool>> {
    let n = adj.node_count();
    let mut a = vec![vec![false; n]; n];
    for (i, j) in adj.edges() {
        a[i][j] = true;
    }
    a
}

pub fn matmul(x: &Mat, w: &Mat) -> Mat {
    let k = w.len();
    let m = w.first().map_or(0, Vec::len);
    x.iter()
        .map(|row| {
            assert_eq!(row.len(), k);
            (0..m)
                .map(|c| (0..k).map(|i| row[i] * w[i][c]).sum())
                .collect()
        })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Per-edge brute force: α_ij = exp(e_ij) / Σ_k exp(e_ik), no max shift.
pub fn attention_matrix(h: &Mat, adj: &[Vec<bool>], a: &[f64], slope: f64) -> Mat {
    let n = h.len();
    let f = h[0].len();
    let score = |i: usize, j: usize| {
        let s: f64 = (0..f).map(|k| a[k] * h[i][k] + a[f + k] * h[j][k]).sum();
        leaky(s, slope).exp()
    };
    let mut att = vec![vec![0.0; n]; n];
    for i in 0..n {
        let z: f64 = (0..n).filter(|&j| adj[i][j]).map(|j| score(i, j)).sum();
        for j in 0..n {
            if adj[i][j] {
                att[i][j] = score(i, j) / z;
            }
        }
    }
    att
}

/// `A_att · (X W)` through the full N×N attention matrix.
pub fn gat_head(x: &Mat, adj: &[Vec<bool>], w: &Mat, a: &[f64], slope: f64) -> Mat {
    let h = matmul(x, w);
    let att = attention_matrix(&h, adj, a, slope);
    matmul(&att, &h)
}

/// Head mean followed by PReLU.
pub fn gat_layer(
    x: &Mat,
    adj: &[Vec<bool>],
    heads: &[(Mat, Vec<f64>)],
    slope: f64,
    prelu: f64,
) -> Mat {
    let outs: Vec<Mat> = heads
        .iter()
        .map(|(w, a)| gat_head(x, adj, w, a, slope))
        .collect();
    let (n, f) = (outs[0].len(), outs[0][0].len());
    let k = heads.len() as f64;
    (0..n)
        .map(|i| {
            (0..f)
                .map(|c| {
                    let m = outs.iter().map(|o| o[i][c]).sum::<f64>() / k;
                    if m > 0.0 {
                        m
                    } else {
                        prelu * m
                    }
                })
                .collect()
        })
        .collect()
}

pub fn softmax3(w: [f64; 3]) -> [f64; 3] {
    let e = [w[0].exp(), w[1].exp(), w[2].exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

pub fn column_max(x: &Mat) -> Vec<f64> {
    (0..x[0].len())
        .map(|c| x.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn column_mean(x: &Mat) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x[0].len())
        .map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect()
}

/// Column-pooled mixture `α1 x + α2 max + α3 avg`.
pub fn adaptive_mix(x: &Mat, w: [f64; 3]) -> Mat {
    let a = softmax3(w);
    let mx = column_max(x);
    let av = column_mean(x);
    x.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, v)| a[0] * v + a[1] * mx[c] + a[2] * av[c])
                .collect()
        })
        .collect()
}

pub fn readout(z: &Mat) -> Vec<f64> {
    column_mean(z)
}

/// `σ(Σ_a Σ_b z_a W_ab t_b)`
pub fn discriminate(z: &[f64], t: &[f64], w: &Mat) -> f64 {
    let mut s = 0.0;
    for a in 0..z.len() {
        for b in 0..t.len() {
            s += z[a] * w[a][b] * t[b];
        }
    }
    sigmoid(s)
}

/// Negated mean log-likelihood, one term at a time.
pub fn infomax_loss(z_pos: &Mat, z_neg: &Mat, t: &[f64], w: &Mat) -> f64 {
    let mut total = 0.0;
    for z in z_pos {
        total += discriminate(z, t, w).ln();
    }
    for z in z_neg {
        total += (1.0 - discriminate(z, t, w)).ln();
    }
    -total / (z_pos.len() + z_neg.len()) as f64
}

pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

/// Definitions applied by counting, one class at a time.
pub fn metrics(y_true: &[usize], y_pred: &[usize], classes: usize) -> Metrics {
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut f1 = Vec::new();
    for c in 0..classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        precision.push(p);
        recall.push(r);
        f1.push(f);
    }
    let k = classes as f64;
    Metrics {
        accuracy: correct as f64 / y_true.len() as f64,
        macro_f1: f1.iter().sum::<f64>() / k,
        macro_recall: recall.iter().sum::<f64>() / k,
        precision,
        recall,
    }
}

/// Scalar Adam with the usual defaults.
pub struct ScalarAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ScalarAdam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        for i in 0..p.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = self.m[i] / (1.0 - b1.powi(self.t));
            let vh = self.v[i] / (1.0 - b2.powi(self.t));
            p[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Full-batch multinomial logistic regression with Adam, from the same
/// seeded Glorot start as the library probe. Returns `(W d×C, b)`.
pub fn logistic_regression(
    x: &Mat,
    y: &[usize],
    classes: usize,
    lr: f64,
    l2: f64,
    epochs: usize,
    seed: u64,
) -> (Mat, Vec<f64>) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut rng = Rng::new(seed);
    let bound = (6.0 / (d + classes) as f64).sqrt();
    let mut w: Mat = (0..d)
        .map(|_| {
            (0..classes)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect()
        })
        .collect();
    let mut b = vec![0.0; classes];
    let mut adam = ScalarAdam::new(d * classes + classes);
    for _ in 0..epochs {
        let mut gw = vec![vec![0.0; classes]; d];
        let mut gb = vec![0.0; classes];
        for (row, &label) in x.iter().zip(y) {
            let logits: Vec<f64> = (0..classes)
                .map(|c| b[c] + (0..d).map(|k| row[k] * w[k][c]).sum::<f64>())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for c in 0..classes {
                let p = (logits[c] - m).exp() / z;
                let delta = (p - if c == label { 1.0 } else { 0.0 }) / n;
                gb[c] += delta;
                for k in 0..d {
                    gw[k][c] += delta * row[k];
                }
            }
        }
        let mut flat: Vec<f64> = w
            .iter()
            .flatten()
            .copied()
            .chain(b.iter().copied())
            .collect();
        let grad: Vec<f64> = (0..d)
            .flat_map(|k| (0..classes).map(move |c| (k, c)))
            .map(|(k, c)| gw[k][c] + l2 * w[k][c])
            .chain(gb.iter().copied())
            .collect();
        adam.step(&mut flat, &grad, lr);
        for k in 0..d {
            w[k].copy_from_slice(&flat[k * classes..(k + 1) * classes]);
        }
        b.copy_from_slice(&flat[d * classes..]);
    }
    (w, b)
}

/// Random undirected graph as an edge list over `n` nodes.
pub fn random_edges(n: usize, p: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.uniform() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn random_mat(r: usize, c: usize, rng: &mut Rng) -> Mat {
    (0..r)
        .map(|_| (0..c).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
        .collect()
}

pub fn dense(m: &Mat) -> DenseMatrix {
    DenseMatrix::from_rows(m).unwrap()
}
