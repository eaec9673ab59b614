//! Seeded property and oracle checks over random small instances. Each
//! returns the worst observed deviation, or a description of the violation.

use super::*;
use afpgnn::adaptive::{adaptive_mix as lib_mix, AdaptiveFeatureParams};
use afpgnn::encoder::attention_coefficients;
use afpgnn::encoder::{
    gat_head_forward, gat_layer_forward, AttentionHeadParams, EncoderConfig, EncoderKind,
    EncoderParams, GatLayerParams,
};
use afpgnn::evaluation::compute_metrics;
use afpgnn::fixtures::{random_adjacency, random_features, random_graph};
use afpgnn::infomax::{self, corrupt, DiscriminatorParams};
use afpgnn::model::{Components, ModelConfig, ModelParams, Objective};
use afpgnn::numerics::activation::softmax;
use afpgnn::numerics::{CsrMatrix, DenseMatrix, Rng, SparseAdjacency};
use afpgnn::training::{train, TrainConfig};

pub type Check = Result<f64, String>;

fn within(name: &str, err: f64, tol: f64) -> Check {
    if err <= tol && err.is_finite() {
        Ok(err)
    } else {
        Err(format!("{name}: deviation {err:e} exceeds {tol:e}"))
    }
}

fn instance(seed: u64) -> (Rng, usize, usize) {
    let mut rng = Rng::new(seed);
    let n = 3 + rng.index(8);
    let f = 2 + rng.index(5);
    (rng, n, f)
}

fn scaled_head(in_dim: usize, out_dim: usize, scale: f64, rng: &mut Rng) -> AttentionHeadParams {
    let mut h = AttentionHeadParams::glorot(in_dim, out_dim, rng);
    h.a.iter_mut().for_each(|v| *v *= scale);
    h
}

// ---------------------------------------------------------------- invariants

pub fn attention_row_stochastic(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let adj = random_adjacency(n, 0.5, &mut rng);
    let h = random_features(n, f, &mut rng).scaled(1.0 + 9.0 * rng.uniform());
    let a: Vec<f64> = (0..2 * f).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    let alpha = attention_coefficients(&h, &adj, &a, 0.2).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..n {
        let s: f64 = adj.row_range(i).map(|e| alpha[e]).sum();
        worst = worst.max((s - 1.0).abs());
        if adj.row_range(i).any(|e| !(0.0..=1.0).contains(&alpha[e])) {
            return Err(format!("node {i}: weight outside [0, 1]"));
        }
    }
    within("row sums", worst, 1e-10)
}

pub fn softmax_shift_invariance(seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let k = 1 + rng.index(12);
    let xs: Vec<f64> = (0..k).map(|_| rng.uniform_range(-30.0, 30.0)).collect();
    let c = rng.uniform_range(-500.0, 500.0);
    let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
    let (p, q) = (softmax(&xs), softmax(&shifted));
    let err = p
        .iter()
        .zip(&q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    within("softmax shift", err, 1e-10)
}

pub fn encoder_permutation_equivariance(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let adj = random_adjacency(n, 0.4, &mut rng);
    let x = random_features(n, f, &mut rng);
    let layers = 1 + rng.index(2);
    let kind = if rng.uniform() < 0.5 {
        EncoderKind::Attention
    } else {
        EncoderKind::Mean
    };
    let cfg = EncoderConfig {
        heads: 1 + rng.index(3),
        head_dim: 2 + rng.index(3),
        layers,
        ..EncoderConfig::default()
    };
    let params = EncoderParams::init(kind, &cfg, f, &mut rng).map_err(|e| e.to_string())?;
    let order = rng.permutation(n);
    let z = params.forward(&x, &adj).map_err(|e| e.to_string())?.0;
    let adj_p = adj.permuted(&order).map_err(|e| e.to_string())?;
    let z_p = params
        .forward(&x.gather_rows(&order), &adj_p)
        .map_err(|e| e.to_string())?
        .0;
    within(
        "equivariance",
        z_p.max_abs_diff(&z.gather_rows(&order)),
        1e-10,
    )
}

pub fn encoder_locality(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let adj = random_adjacency(n, 0.3, &mut rng);
    let x = random_features(n, f, &mut rng);
    let layer = GatLayerParams {
        heads: (0..2).map(|_| scaled_head(f, 3, 2.0, &mut rng)).collect(),
        prelu_slope: 0.2,
        leaky_slope: 0.2,
    };
    let base = gat_layer_forward(&x, &adj, &layer).map_err(|e| e.to_string())?;
    let i = rng.index(n);
    let outside: Vec<usize> = (0..n).filter(|&j| !adj.contains(i, j)).collect();
    if outside.is_empty() {
        return Ok(0.0);
    }
    let mut x2 = x.clone();
    for &j in &outside {
        x2.row_mut(j).iter_mut().for_each(|v| *v = 7.0 * *v + 3.0);
    }
    let moved = gat_layer_forward(&x2, &adj, &layer).map_err(|e| e.to_string())?;
    if moved.row(i) != base.row(i) {
        return Err(format!(
            "node {i} changed when only non-neighbors were edited"
        ));
    }
    Ok(0.0)
}

pub fn corruption_preserves_adjacency(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let adj = random_adjacency(n, 0.4, &mut rng);
    let x = random_features(n, f, &mut rng);
    let before = (adj.row_offsets().to_vec(), adj.col_indices().to_vec());
    let c = corrupt(&x, &adj, &mut rng).map_err(|e| e.to_string())?;
    if (c.adjacency.row_offsets(), c.adjacency.col_indices()) != (&before.0[..], &before.1[..]) {
        return Err("adjacency changed".into());
    }
    if !std::ptr::eq(c.adjacency, &adj) {
        return Err("corrupted graph does not share the source adjacency".into());
    }
    let restored = c.features.gather_rows(&c.inverse_permutation());
    if restored != x {
        return Err("inverse permutation does not recover the features".into());
    }
    let key = |m: &DenseMatrix| {
        let mut rows: Vec<Vec<u64>> = (0..m.rows())
            .map(|r| m.row(r).iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        rows
    };
    if key(&c.features) != key(&x) {
        return Err("row multiset changed".into());
    }
    Ok(0.0)
}

pub fn adaptive_convex_bounds(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let x = random_features(n, f, &mut rng).scaled(5.0);
    let w = [
        rng.uniform_range(-20.0, 20.0),
        rng.uniform_range(-20.0, 20.0),
        rng.uniform_range(-20.0, 20.0),
    ];
    let out = lib_mix(&x, &AdaptiveFeatureParams::new(w)).map_err(|e| e.to_string())?;
    let m = to_mat(&x);
    let (mx, av) = (column_max(&m), column_mean(&m));
    let mut worst = 0.0f64;
    for i in 0..n {
        for c in 0..f {
            let lo = m[i][c].min(mx[c]).min(av[c]);
            let hi = m[i][c].max(mx[c]).max(av[c]);
            let v = out.get(i, c);
            worst = worst.max(lo - v).max(v - hi);
        }
        if mx.iter().zip(&av).any(|(a, b)| a < b) {
            return Err("max pool below average pool".into());
        }
    }
    within("convex bounds", worst.max(0.0), 1e-12)
}

pub fn readout_mean_identity(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let z = random_features(n, f, &mut rng);
    let t = infomax::readout(&z).map_err(|e| e.to_string())?;
    let err = t
        .iter()
        .zip(readout(&to_mat(&z)))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let t_perm =
        infomax::readout(&z.gather_rows(&rng.permutation(n))).map_err(|e| e.to_string())?;
    let perm_err = t
        .iter()
        .zip(&t_perm)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let v: Vec<f64> = (0..f).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    let same = DenseMatrix::from_rows(&vec![v.clone(); n]).unwrap();
    let const_err = infomax::readout(&same)
        .map_err(|e| e.to_string())?
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    within("readout", err.max(perm_err).max(const_err), 1e-12)
}

pub fn uninformative_loss_is_ln2(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let z_pos = random_features(n, f, &mut rng);
    let z_neg = random_features(n, f, &mut rng);
    let t = infomax::readout(&z_pos).unwrap();
    let l = infomax::infomax_loss(&z_pos, &z_neg, &t, &DiscriminatorParams::zeros(f))
        .map_err(|e| e.to_string())?;

    let graph = random_graph(n.max(4), f, 2, &mut rng);
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            heads: 2,
            head_dim: 3,
            ..EncoderConfig::default()
        },
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(&cfg, f, &mut rng).map_err(|e| e.to_string())?;
    params.disc = DiscriminatorParams::zeros(params.embedding_dim());
    let mut objective = Objective::new(&graph, cfg).map_err(|e| e.to_string())?;
    let (model_loss, _) = objective
        .forward_loss(&params, &mut rng, true)
        .map_err(|e| e.to_string())?;
    let ln2 = std::f64::consts::LN_2;
    within("ln 2", (l - ln2).abs().max((model_loss - ln2).abs()), 1e-15)
}

pub fn bit_reproducible(seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let graph = random_graph(8, 5, 2, &mut rng);
    let cfg = TrainConfig {
        lr: 0.01,
        max_epochs: 6,
        patience: 0,
        seed,
        model: ModelConfig {
            encoder: EncoderConfig {
                heads: 2,
                head_dim: 3,
                ..EncoderConfig::default()
            },
            p_drop: 0.3,
            components: Components::FULL,
            ..ModelConfig::default()
        },
    };
    let (p1, r1) = train(&graph, &cfg).map_err(|e| e.to_string())?;
    let (p2, r2) = train(&graph, &cfg).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    if bits(&p1.flatten()) != bits(&p2.flatten())
        || bits(&r1.losses) != bits(&r2.losses)
        || r1.without_timing() != r2.without_timing()
    {
        return Err("two runs with the same seed differ".into());
    }
    let e1 = afpgnn::model::embed(&graph, &p1, &cfg.model).map_err(|e| e.to_string())?;
    let e2 = afpgnn::model::embed(&graph, &p1, &cfg.model).map_err(|e| e.to_string())?;
    if bits(e1.as_slice()) != bits(e2.as_slice()) {
        return Err("embedding is not deterministic".into());
    }
    Ok(0.0)
}

// ------------------------------------------------------------------- oracles

pub fn oracle_gat_head(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let adj = random_adjacency(n, 0.4, &mut rng);
    let x = random_features(n, f, &mut rng);
    let head = scaled_head(f, 1 + rng.index(4), 3.0, &mut rng);
    let got = gat_head_forward(&x, &adj, &head, 0.2).map_err(|e| e.to_string())?;
    let want = gat_head(
        &to_mat(&x),
        &dense_adjacency(&adj),
        &to_mat(&head.w),
        &head.a,
        0.2,
    );
    within("gat head", max_abs_diff(&want, &got), 1e-10)
}

pub fn oracle_gat_layer(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let adj = random_adjacency(n, 0.4, &mut rng);
    let x = random_features(n, f, &mut rng);
    let out = 1 + rng.index(4);
    let layer = GatLayerParams {
        heads: (0..2).map(|_| scaled_head(f, out, 2.0, &mut rng)).collect(),
        prelu_slope: rng.uniform_range(0.0, 0.5),
        leaky_slope: 0.2,
    };
    let got = gat_layer_forward(&x, &adj, &layer).map_err(|e| e.to_string())?;
    let heads: Vec<(Mat, Vec<f64>)> = layer
        .heads
        .iter()
        .map(|h| (to_mat(&h.w), h.a.clone()))
        .collect();
    let want = gat_layer(
        &to_mat(&x),
        &dense_adjacency(&adj),
        &heads,
        0.2,
        layer.prelu_slope,
    );
    within("gat layer", max_abs_diff(&want, &got), 1e-10)
}

pub fn oracle_adaptive_mix(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let x = random_mat(n, f, &mut rng);
    let w = [
        rng.uniform_range(-3.0, 3.0),
        rng.uniform_range(-3.0, 3.0),
        rng.uniform_range(-3.0, 3.0),
    ];
    let got = lib_mix(&dense(&x), &AdaptiveFeatureParams::new(w)).map_err(|e| e.to_string())?;
    within(
        "adaptive mix",
        max_abs_diff(&adaptive_mix(&x, w), &got),
        1e-12,
    )
}

pub fn oracle_readout(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let z = random_mat(n, f, &mut rng);
    let got = infomax::readout(&dense(&z)).map_err(|e| e.to_string())?;
    let err = got
        .iter()
        .zip(readout(&z))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    within("readout", err, 1e-12)
}

pub fn oracle_discriminate(seed: u64) -> Check {
    let (mut rng, _, f) = instance(seed);
    let z: Vec<f64> = (0..f).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let t: Vec<f64> = (0..f).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let w = random_mat(f, f, &mut rng);
    let got = infomax::discriminate(&z, &t, &DiscriminatorParams { w: dense(&w) })
        .map_err(|e| e.to_string())?;
    within(
        "discriminate",
        (got - discriminate(&z, &t, &w)).abs(),
        1e-12,
    )
}

pub fn oracle_infomax_loss(seed: u64) -> Check {
    let (mut rng, n, f) = instance(seed);
    let m = 2 + rng.index(6);
    let z_pos = random_mat(n, f, &mut rng);
    let z_neg = random_mat(m, f, &mut rng);
    let w = random_mat(f, f, &mut rng);
    let t = readout(&z_pos);
    let got = infomax::infomax_loss(
        &dense(&z_pos),
        &dense(&z_neg),
        &t,
        &DiscriminatorParams { w: dense(&w) },
    )
    .map_err(|e| e.to_string())?;
    within(
        "infomax loss",
        (got - infomax_loss(&z_pos, &z_neg, &t, &w)).abs(),
        1e-10,
    )
}

pub fn oracle_metrics(seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let classes = 1 + rng.index(6);
    // leave room for classes that never occur
    let used = 1 + rng.index(classes);
    let len = 1 + rng.index(40);
    let y_true: Vec<usize> = (0..len).map(|_| rng.index(used)).collect();
    let y_pred: Vec<usize> = y_true
        .iter()
        .map(|&y| {
            if rng.uniform() < 0.6 {
                y
            } else {
                rng.index(used)
            }
        })
        .collect();
    let got = compute_metrics(&y_true, &y_pred, classes).map_err(|e| e.to_string())?;
    let want = metrics(&y_true, &y_pred, classes);
    let mut err = (got.accuracy - want.accuracy)
        .abs()
        .max((got.macro_f1 - want.macro_f1).abs())
        .max((got.macro_recall - want.macro_recall).abs());
    for c in 0..classes {
        err = err
            .max((got.per_class.precision[c] - want.precision[c]).abs())
            .max((got.per_class.recall[c] - want.recall[c]).abs());
    }
    // single-label: accuracy is micro recall and micro precision
    let tp: usize = (0..classes).map(|c| got.confusion[c][c]).sum();
    let micro = tp as f64 / len as f64;
    err = err.max((micro - got.accuracy).abs());
    within("metrics", err, 1e-12)
}

/// Adjacency built straight from an edge list, for callers that want to
/// stay independent of the fixtures module.
pub fn adjacency_from(n: usize, edges: &[(usize, usize)]) -> SparseAdjacency {
    SparseAdjacency::from_edges(n, edges).unwrap()
}

pub fn csr(m: &Mat) -> CsrMatrix {
    CsrMatrix::from_dense(&dense(m))
}

/// Runs `check` over `count` consecutive seeds from `base` and reports the
/// worst deviation or the first failure.
pub fn sweep(check: fn(u64) -> Check, base: u64, count: u64) -> Check {
    let mut worst = 0.0f64;
    for s in base..base + count {
        worst = worst.max(check(s).map_err(|e| format!("seed {s}: {e}"))?);
    }
    Ok(worst)
}
