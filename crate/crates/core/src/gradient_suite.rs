//! Finite-difference checks of every backward pass on small seeded graphs.
//!
//! Each layer is checked in isolation against a random linear read-out of
//! its output, `L = Σ R ⊙ out`, so the upstream gradient is exactly `R`.
//! The composed objective is checked on all parameter groups at once with
//! dropout masks and corruption held fixed.

use serde::Serialize;

use crate::adaptive::{adaptive_backward, adaptive_forward, AdaptiveFeatureParams, PoolAxis};
use crate::encoder::{
    gat_layer_backward, gat_layer_forward_cached, mean_layer_backward, mean_layer_forward,
    AttentionHeadParams, EncoderConfig, GatLayerParams, MeanLayerParams,
};
use crate::error::Result;
use crate::fixtures::{random_features, random_graph};
use crate::infomax::{DiscriminatorParams, InfomaxPass};
use crate::model::{objective, Components, EpochSample, EvalRequest, ModelConfig, ModelParams};
use crate::numerics::dense::dot;
use crate::numerics::{
    CsrMatrix, DenseMatrix, GradCheck, GradCheckReport, InputGradient, Probe, Rng, SparseAdjacency,
};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct NamedReport {
    pub name: String,
    pub report: GradCheckReport,
}

impl NamedReport {
    pub fn passes(&self) -> bool {
        self.report.passes(TOLERANCE) && self.report.checked > 0
    }
}

fn named(name: impl Into<String>, report: GradCheckReport) -> NamedReport {
    NamedReport {
        name: name.into(),
        report,
    }
}

fn readout_weights(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    random_features(rows, cols, rng)
}

fn linear_readout(out: &DenseMatrix, r: &DenseMatrix) -> f64 {
    dot(out.as_slice(), r.as_slice())
}

const N: usize = 6;
const F: usize = 4;

/// Adaptive layer: gradient for the mixing logits and for the input.
pub fn check_adaptive(seed: u64, axis: PoolAxis) -> Result<Vec<NamedReport>> {
    let mut rng = Rng::new(seed);
    let x = random_features(N, F, &mut rng);
    let r = readout_weights(N, F, &mut rng);
    let w = [
        rng.uniform_range(-1.0, 1.0),
        rng.uniform_range(-1.0, 1.0),
        rng.uniform_range(-1.0, 1.0),
    ];
    let upstream = InputGradient::Dense(r.clone());

    let mixed = adaptive_forward(
        &CsrMatrix::from_dense(&x),
        &AdaptiveFeatureParams::new(w),
        axis,
    )?;
    let analytic_w = adaptive_backward(&mixed, &upstream)?;
    let analytic_x = mixed.input_gradient(&upstream)?;

    let eval = |x: &DenseMatrix, w: [f64; 3]| -> Probe {
        match adaptive_forward(
            &CsrMatrix::from_dense(x),
            &AdaptiveFeatureParams::new(w),
            axis,
        ) {
            Ok(m) => {
                use crate::numerics::RowOperand;
                Probe {
                    loss: linear_readout(&m.to_dense(), &r),
                    kinks: m.max_arg().iter().map(|&a| a as u64).collect(),
                }
            }
            Err(_) => Probe::smooth(f64::NAN),
        }
    };
    let check = GradCheck::default();
    let rep_w = check.run(|p| eval(&x, [p[0], p[1], p[2]]), &w, &analytic_w, &mut rng);
    let rep_x = check.run(
        |p| eval(&DenseMatrix::from_vec(N, F, p.to_vec()).expect("shape"), w),
        x.as_slice(),
        analytic_x.as_slice(),
        &mut rng,
    );
    let tag = axis.as_str();
    Ok(vec![
        named(format!("adaptive[{tag}]/w"), rep_w),
        named(format!("adaptive[{tag}]/input"), rep_x),
    ])
}

fn flatten_gat(p: &GatLayerParams) -> Vec<f64> {
    let mut out = Vec::new();
    for h in &p.heads {
        out.extend_from_slice(h.w.as_slice());
        out.extend_from_slice(&h.a);
    }
    out.push(p.prelu_slope);
    out
}

fn unflatten_gat(template: &GatLayerParams, flat: &[f64]) -> GatLayerParams {
    let mut p = template.clone();
    let mut it = flat.iter().copied();
    for h in &mut p.heads {
        h.w.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = it.next().unwrap());
        h.a.iter_mut().for_each(|v| *v = it.next().unwrap());
    }
    p.prelu_slope = it.next().unwrap();
    p
}

/// One attention layer with `heads` heads: parameters and input.
pub fn check_attention_layer(seed: u64, heads: usize) -> Result<Vec<NamedReport>> {
    let mut rng = Rng::new(seed);
    let graph = random_graph(N, F, 2, &mut rng);
    let adj = graph.adjacency().clone();
    let x = graph.dense_features();
    let out_dim = 3;
    let params = GatLayerParams {
        heads: (0..heads)
            .map(|_| AttentionHeadParams::glorot(F, out_dim, &mut rng))
            .collect(),
        prelu_slope: 0.2,
        leaky_slope: 0.2,
    };
    let r = readout_weights(N, out_dim, &mut rng);

    let (_, cache) = gat_layer_forward_cached(&x, &adj, &params)?;
    let (dx, grads) = gat_layer_backward(&x, &adj, &params, &cache, &r)?;

    let eval = |x: &DenseMatrix, p: &GatLayerParams| -> Probe {
        match gat_layer_forward_cached(x, &adj, p) {
            Ok((out, cache)) => {
                let mut kinks = Vec::new();
                cache.push_kinks(&mut kinks);
                Probe {
                    loss: linear_readout(&out, &r),
                    kinks,
                }
            }
            Err(_) => Probe::smooth(f64::NAN),
        }
    };
    let check = GradCheck::default();
    let rep_p = check.run(
        |flat| eval(&x, &unflatten_gat(&params, flat)),
        &flatten_gat(&params),
        &flatten_gat(&grads),
        &mut rng,
    );
    let rep_x = check.run(
        |flat| {
            eval(
                &DenseMatrix::from_vec(N, F, flat.to_vec()).expect("shape"),
                &params,
            )
        },
        x.as_slice(),
        dx.to_dense().as_slice(),
        &mut rng,
    );
    Ok(vec![
        named(format!("attention[K={heads}]/params"), rep_p),
        named(format!("attention[K={heads}]/input"), rep_x),
    ])
}

/// Attention-free aggregator: parameters and input.
pub fn check_mean_layer(seed: u64) -> Result<Vec<NamedReport>> {
    let mut rng = Rng::new(seed);
    let graph = random_graph(N, F, 2, &mut rng);
    let adj: SparseAdjacency = graph.adjacency().clone();
    let x = graph.dense_features();
    let params = MeanLayerParams::glorot(F, 3, 0.2, &mut rng);
    let r = readout_weights(N, 3, &mut rng);
    let (_, cache) = mean_layer_forward(&x, &adj, &params)?;
    let (dx, grads) = mean_layer_backward(&x, &adj, &params, &cache, &r)?;

    let flatten = |p: &MeanLayerParams| {
        let mut v = p.w.as_slice().to_vec();
        v.push(p.prelu_slope);
        v
    };
    let eval = |x: &DenseMatrix, p: &MeanLayerParams| -> Probe {
        match mean_layer_forward(x, &adj, p) {
            Ok((out, cache)) => {
                let mut kinks = Vec::new();
                cache.push_kinks(&mut kinks);
                Probe {
                    loss: linear_readout(&out, &r),
                    kinks,
                }
            }
            Err(_) => Probe::smooth(f64::NAN),
        }
    };
    let check = GradCheck::default();
    let rep_p = check.run(
        |flat| {
            let (w, s) = flat.split_at(flat.len() - 1);
            let p = MeanLayerParams {
                w: DenseMatrix::from_vec(F, 3, w.to_vec()).expect("shape"),
                prelu_slope: s[0],
            };
            eval(&x, &p)
        },
        &flatten(&params),
        &flatten(&grads),
        &mut rng,
    );
    let rep_x = check.run(
        |flat| {
            eval(
                &DenseMatrix::from_vec(N, F, flat.to_vec()).expect("shape"),
                &params,
            )
        },
        x.as_slice(),
        dx.to_dense().as_slice(),
        &mut rng,
    );
    Ok(vec![
        named("mean/params", rep_p),
        named("mean/input", rep_x),
    ])
}

/// Contrastive loss with the summary recomputed from the positives, so the
/// check covers the path through the readout.
pub fn check_infomax(seed: u64) -> Result<Vec<NamedReport>> {
    let mut rng = Rng::new(seed);
    let d = 3;
    let z_pos = random_features(N, d, &mut rng);
    let z_neg = random_features(N, d, &mut rng);
    let disc = DiscriminatorParams {
        w: random_features(d, d, &mut rng),
    };
    let pass = InfomaxPass::new(&z_pos, &z_neg, &disc)?;
    let g = pass.backward(&z_pos, &z_neg, &disc)?;

    let split = |flat: &[f64]| {
        let (a, rest) = flat.split_at(N * d);
        let (b, c) = rest.split_at(N * d);
        (
            DenseMatrix::from_vec(N, d, a.to_vec()).expect("shape"),
            DenseMatrix::from_vec(N, d, b.to_vec()).expect("shape"),
            DiscriminatorParams {
                w: DenseMatrix::from_vec(d, d, c.to_vec()).expect("shape"),
            },
        )
    };
    let concat = |a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix| {
        [a.as_slice(), b.as_slice(), c.as_slice()].concat()
    };
    let rep = GradCheck::default().run(
        |flat| {
            let (p, n, w) = split(flat);
            Probe::smooth(
                InfomaxPass::new(&p, &n, &w)
                    .map(|x| x.loss)
                    .unwrap_or(f64::NAN),
            )
        },
        &concat(&z_pos, &z_neg, &disc.w),
        &concat(&g.z_pos, &g.z_neg, &g.w),
        &mut rng,
    );
    Ok(vec![named("infomax/embeddings+discriminator", rep)])
}

/// Whole objective, every parameter group at once, fixed random draws.
pub fn check_full_model(
    seed: u64,
    components: Components,
    corrupt_raw: bool,
) -> Result<Vec<NamedReport>> {
    let mut rng = Rng::new(seed);
    let graph = random_graph(N, F, 2, &mut rng);
    let config = ModelConfig {
        encoder: EncoderConfig {
            heads: 2,
            head_dim: 3,
            ..Default::default()
        },
        components,
        corrupt_raw,
        p_drop: 0.3,
        ..Default::default()
    };
    let mut params = ModelParams::init(&config, F, &mut rng)?;
    params.adaptive.w = [0.3, -0.2, 0.1];
    let sample = EpochSample::draw(&graph, &config, &mut rng, true)?;
    let request = EvalRequest {
        grads: true,
        kinks: true,
    };
    let adj = graph.adjacency();
    let value = objective(adj, &params, &config, &sample, request)?;
    let analytic = value.grads.expect("requested").flatten();

    let rep = GradCheck::default().run(
        |flat| {
            let mut p = params.clone();
            if p.assign_flat(flat).is_err() {
                return Probe::smooth(f64::NAN);
            }
            match objective(
                adj,
                &p,
                &config,
                &sample,
                EvalRequest {
                    grads: false,
                    kinks: true,
                },
            ) {
                Ok(v) => Probe {
                    loss: v.loss,
                    kinks: v.kinks,
                },
                Err(_) => Probe::smooth(f64::NAN),
            }
        },
        &params.flatten(),
        &analytic,
        &mut rng,
    );
    let raw = if corrupt_raw { "" } else { ",mixed-corruption" };
    Ok(vec![named(format!("model[{components}{raw}]"), rep)])
}

/// Every check, the set run by the `gradcheck` command.
pub fn run_all(seed: u64) -> Result<Vec<NamedReport>> {
    let mut out = Vec::new();
    out.extend(check_adaptive(seed, PoolAxis::Nodes)?);
    out.extend(check_adaptive(seed, PoolAxis::Features)?);
    out.extend(check_attention_layer(seed, 1)?);
    out.extend(check_attention_layer(seed, 3)?);
    out.extend(check_mean_layer(seed)?);
    out.extend(check_infomax(seed)?);
    for v in Components::variants() {
        out.extend(check_full_model(seed, v, true)?);
    }
    out.extend(check_full_model(seed, Components::FULL, false)?);
    Ok(out)
}
