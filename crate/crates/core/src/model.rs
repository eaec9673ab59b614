//! The full pipeline: input dropout, adaptive mixing, graph encoder and the
//! contrastive objective, with its gradient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptive::{
    adaptive_backward, adaptive_forward, AdaptiveFeatureParams, MixedFeatures, PoolAxis,
};
use crate::data::CitationGraph;
use crate::encoder::{EncoderConfig, EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::infomax::{DiscriminatorParams, InfomaxPass};
use crate::numerics::{dropout_sparse, CsrMatrix, DenseMatrix, Rng, SparseAdjacency};

/// Which of the three components are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Components {
    /// Adaptive feature mixing. Off: raw features go straight to the encoder.
    pub adaptive: bool,
    /// Attention encoder. Off: linear projection plus neighborhood mean.
    pub attention: bool,
    /// Contrastive training. Off: the encoder keeps its random init.
    pub mutual_information: bool,
}

impl Components {
    pub const FULL: Components = Components {
        adaptive: true,
        attention: true,
        mutual_information: true,
    };

    /// The full model followed by every single and double component subset.
    pub fn variants() -> [Components; 7] {
        let c = |adaptive, attention, mutual_information| Components {
            adaptive,
            attention,
            mutual_information,
        };
        [
            Self::FULL,
            c(true, false, false),
            c(false, true, false),
            c(false, false, true),
            c(true, true, false),
            c(true, false, true),
            c(false, true, true),
        ]
    }

    pub fn encoder_kind(self) -> EncoderKind {
        if self.attention {
            EncoderKind::Attention
        } else {
            EncoderKind::Mean
        }
    }

    pub fn name(self) -> String {
        if self == Self::FULL {
            return "full".into();
        }
        let parts: Vec<&str> = [
            (self.adaptive, "adaptive"),
            (self.attention, "attention"),
            (self.mutual_information, "mutual_information"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        parts.join("+")
    }
}

impl Default for Components {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Components {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::variants()
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<String> = Self::variants().iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown variant {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Pipeline settings that shape the forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub components: Components,
    pub pool_axis: PoolAxis,
    pub adaptive_frozen: bool,
    /// Shuffle raw features before mixing. Off: shuffle the mixed features.
    pub corrupt_raw: bool,
    pub p_drop: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            components: Components::FULL,
            pool_axis: PoolAxis::Nodes,
            adaptive_frozen: false,
            corrupt_raw: true,
            p_drop: 0.8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!(
                "p_drop must be in [0, 1), got {}",
                self.p_drop
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub adaptive: AdaptiveFeatureParams,
    pub encoder: EncoderParams,
    pub disc: DiscriminatorParams,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, in_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let encoder = EncoderParams::init(
            config.components.encoder_kind(),
            &config.encoder,
            in_dim,
            rng,
        )?;
        let disc = DiscriminatorParams::zeros(encoder.out_dim());
        Ok(Self {
            adaptive: AdaptiveFeatureParams {
                w: [0.0; 3],
                frozen: config.adaptive_frozen || !config.components.adaptive,
            },
            encoder,
            disc,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn visit(&self, f: &mut dyn FnMut(f64)) {
        self.adaptive.w.iter().for_each(|&v| f(v));
        self.encoder.visit(f);
        self.disc.w.as_slice().iter().for_each(|&v| f(v));
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.adaptive.w.iter_mut().for_each(&mut *f);
        self.encoder.visit_mut(f);
        self.disc.w.as_mut_slice().iter_mut().for_each(&mut *f);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |v| out.push(v));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let n = self.param_count();
        if values.len() != n {
            return Err(Error::shape("flat parameters", n, values.len()));
        }
        let mut it = values.iter();
        self.visit_mut(&mut |v| *v = *it.next().expect("length checked"));
        Ok(())
    }

    /// L2 norm of each parameter group, for diagnostics.
    pub fn group_norms(&self) -> Vec<(String, f64)> {
        let norm = |xs: &mut dyn FnMut(&mut dyn FnMut(f64))| {
            let mut s = 0.0;
            xs(&mut |v| s += v * v);
            s.sqrt()
        };
        vec![
            (
                "adaptive".into(),
                norm(&mut |f| self.adaptive.w.iter().for_each(|&v| f(v))),
            ),
            ("encoder".into(), norm(&mut |f| self.encoder.visit(f))),
            ("discriminator".into(), self.disc.w.frobenius_norm()),
        ]
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |v| ok &= v.is_finite());
        ok
    }
}

/// Random draws for one objective evaluation: dropped-out inputs for both
/// branches and the corruption permutation.
#[derive(Clone, Debug)]
pub struct EpochSample {
    pub clean: CsrMatrix,
    /// Already shuffled when corrupting raw features, unshuffled otherwise.
    pub negative: CsrMatrix,
    pub permutation: Vec<usize>,
    pub permute_after_mix: bool,
}

impl EpochSample {
    pub fn draw(
        graph: &CitationGraph,
        config: &ModelConfig,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Self> {
        if graph.node_count() < 2 {
            return Err(Error::InvalidArgument(
                "corruption needs at least 2 nodes".into(),
            ));
        }
        let clean = dropout_sparse(graph.features(), config.p_drop, rng, training)?;
        let permutation = rng.permutation(graph.node_count());
        Self::assemble(graph, config, clean, permutation, rng, training)
    }

    /// Like [`EpochSample::draw`] with a caller-chosen permutation.
    pub fn with_permutation(
        graph: &CitationGraph,
        config: &ModelConfig,
        permutation: Vec<usize>,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Self> {
        let clean = dropout_sparse(graph.features(), config.p_drop, rng, training)?;
        Self::assemble(graph, config, clean, permutation, rng, training)
    }

    fn assemble(
        graph: &CitationGraph,
        config: &ModelConfig,
        clean: CsrMatrix,
        permutation: Vec<usize>,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Self> {
        let n = graph.node_count();
        let mut seen = vec![false; n];
        if permutation.len() != n
            || permutation
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidArgument(
                "corruption order is not a permutation of the nodes".into(),
            ));
        }
        let negative = if config.corrupt_raw {
            dropout_sparse(
                &graph.features().gather_rows(&permutation),
                config.p_drop,
                rng,
                training,
            )?
        } else {
            dropout_sparse(graph.features(), config.p_drop, rng, training)?
        };
        Ok(Self {
            clean,
            negative,
            permutation,
            permute_after_mix: !config.corrupt_raw,
        })
    }
}

fn mix(
    x: &CsrMatrix,
    params: &AdaptiveFeatureParams,
    config: &ModelConfig,
) -> Result<MixedFeatures> {
    if config.components.adaptive {
        adaptive_forward(x, params, config.pool_axis)
    } else {
        Ok(MixedFeatures::passthrough(x))
    }
}

/// Result of one objective evaluation.
#[derive(Clone, Debug)]
pub struct ObjectiveValue {
    pub loss: f64,
    pub embeddings: DenseMatrix,
    /// Gradient shaped like the parameters, when requested.
    pub grads: Option<ModelParams>,
    /// Branch signature of every piecewise-linear op, when requested.
    pub kinks: Vec<u64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalRequest {
    pub grads: bool,
    pub kinks: bool,
}

/// Evaluates the loss on fixed random draws.
pub fn objective(
    adjacency: &SparseAdjacency,
    params: &ModelParams,
    config: &ModelConfig,
    sample: &EpochSample,
    request: EvalRequest,
) -> Result<ObjectiveValue> {
    let pos_in = mix(&sample.clean, &params.adaptive, config)?;
    let mut neg_in = mix(&sample.negative, &params.adaptive, config)?;
    if sample.permute_after_mix {
        neg_in = neg_in.gather_rows(&sample.permutation);
    }
    let (z_pos, cache_pos) = params.encoder.forward(&pos_in, adjacency)?;
    let (z_neg, cache_neg) = params.encoder.forward(&neg_in, adjacency)?;
    let pass = InfomaxPass::new(&z_pos, &z_neg, &params.disc)?;

    let mut kinks = Vec::new();
    if request.kinks {
        kinks.extend(pos_in.max_arg().iter().map(|&a| a as u64));
        kinks.extend(neg_in.max_arg().iter().map(|&a| a as u64));
        cache_pos.push_kinks(&mut kinks);
        cache_neg.push_kinks(&mut kinks);
    }

    let grads = if request.grads {
        let g = pass.backward(&z_pos, &z_neg, &params.disc)?;
        let (dx_pos, enc_pos) = params
            .encoder
            .backward(&pos_in, adjacency, &cache_pos, &g.z_pos)?;
        let (dx_neg, enc_neg) = params
            .encoder
            .backward(&neg_in, adjacency, &cache_neg, &g.z_neg)?;
        let dw = if params.adaptive.frozen || !config.components.adaptive {
            [0.0; 3]
        } else {
            let a = adaptive_backward(&pos_in, &dx_pos)?;
            let b = adaptive_backward(&neg_in, &dx_neg)?;
            [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
        };
        let mut total = ModelParams {
            adaptive: AdaptiveFeatureParams {
                w: dw,
                frozen: params.adaptive.frozen,
            },
            encoder: enc_pos,
            disc: DiscriminatorParams { w: g.w },
        };
        let neg_flat = flat_encoder(&enc_neg);
        let mut it = neg_flat.iter();
        total
            .encoder
            .visit_mut(&mut |v| *v += it.next().expect("same layout"));
        Some(total)
    } else {
        None
    };

    Ok(ObjectiveValue {
        loss: pass.loss,
        embeddings: z_pos,
        grads,
        kinks,
    })
}

fn flat_encoder(p: &EncoderParams) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit(&mut |v| out.push(v));
    out
}

/// Inference-mode embeddings: no dropout, adaptive mixing and encoder only.
pub fn embed(
    graph: &CitationGraph,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<DenseMatrix> {
    let x = mix(graph.features(), &params.adaptive, config)?;
    Ok(params.encoder.forward(&x, graph.adjacency())?.0)
}

/// Stateful wrapper that remembers the last corruption permutation, so an
/// inference-mode loss is reported on the same negatives training last saw.
#[derive(Clone, Debug)]
pub struct Objective<'g> {
    graph: &'g CitationGraph,
    config: ModelConfig,
    last_permutation: Option<Vec<usize>>,
}

impl<'g> Objective<'g> {
    pub fn new(graph: &'g CitationGraph, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            graph,
            config,
            last_permutation: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn last_permutation(&self) -> Option<&[usize]> {
        self.last_permutation.as_deref()
    }

    /// Training mode draws fresh dropout masks and a fresh permutation.
    /// Inference mode disables dropout and reuses the last permutation
    /// (drawing one only if none exists yet).
    pub fn sample(&mut self, rng: &mut Rng, training: bool) -> Result<EpochSample> {
        let sample = match (&self.last_permutation, training) {
            (Some(perm), false) => {
                EpochSample::with_permutation(self.graph, &self.config, perm.clone(), rng, false)?
            }
            _ => EpochSample::draw(self.graph, &self.config, rng, training)?,
        };
        self.last_permutation = Some(sample.permutation.clone());
        Ok(sample)
    }

    pub fn forward_loss(
        &mut self,
        params: &ModelParams,
        rng: &mut Rng,
        training: bool,
    ) -> Result<(f64, DenseMatrix)> {
        let sample = self.sample(rng, training)?;
        let v = objective(
            self.graph.adjacency(),
            params,
            &self.config,
            &sample,
            EvalRequest::default(),
        )?;
        Ok((v.loss, v.embeddings))
    }

    pub fn loss_and_grad(
        &mut self,
        params: &ModelParams,
        rng: &mut Rng,
    ) -> Result<(f64, ModelParams)> {
        let sample = self.sample(rng, true)?;
        let v = objective(
            self.graph.adjacency(),
            params,
            &self.config,
            &sample,
            EvalRequest {
                grads: true,
                kinks: false,
            },
        )?;
        Ok((v.loss, v.grads.expect("requested")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        let names: Vec<String> = Components::variants().iter().map(|v| v.name()).collect();
        assert_eq!(
            names,
            [
                "full",
                "adaptive",
                "attention",
                "mutual_information",
                "adaptive+attention",
                "adaptive+mutual_information",
                "attention+mutual_information"
            ]
        );
        for v in Components::variants() {
            assert_eq!(v.name().parse::<Components>().unwrap(), v);
        }
        assert!("adaptive+attention+mutual_information"
            .parse::<Components>()
            .is_err());
    }
}
