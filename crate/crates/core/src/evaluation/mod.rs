//! Linear-probe evaluation of frozen embeddings.

mod metrics;
mod probe;

use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, MetricsReport, PerClass};
pub use probe::{probe_loss_and_grad, train_probe, LabeledNodes, LinearClassifier, ProbeConfig};

use crate::data::{CitationGraph, SplitMasks};
use crate::error::{Error, Result};
use crate::model::{embed, ModelConfig, ModelParams};
use crate::numerics::DenseMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
}

impl From<&MetricsReport> for Headline {
    fn from(m: &MetricsReport) -> Self {
        Self {
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            macro_recall: m.macro_recall,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub probe_seed: u64,
    pub metrics: MetricsReport,
}

/// Mean and sample standard deviation of the headline metrics over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mean: Headline,
    pub std: Headline,
    pub runs: Vec<SeedMetrics>,
}

impl AggregateMetrics {
    pub fn from_runs(mut runs: Vec<SeedMetrics>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidArgument("no runs to aggregate".into()));
        }
        runs.sort_by_key(|r| r.probe_seed);
        let heads: Vec<Headline> = runs.iter().map(|r| Headline::from(&r.metrics)).collect();
        let (mean, std) = mean_std(&heads);
        Ok(Self { mean, std, runs })
    }
}

pub fn mean_std(xs: &[Headline]) -> (Headline, Headline) {
    let stat = |f: fn(&Headline) -> f64| {
        let n = xs.len() as f64;
        let m = xs.iter().map(f).sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|h| (f(h) - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (m, var.sqrt())
    };
    let (a, sa) = stat(|h| h.accuracy);
    let (f, sf) = stat(|h| h.macro_f1);
    let (r, sr) = stat(|h| h.macro_recall);
    (
        Headline {
            accuracy: a,
            macro_f1: f,
            macro_recall: r,
        },
        Headline {
            accuracy: sa,
            macro_f1: sf,
            macro_recall: sr,
        },
    )
}

/// Probe on train/val, scored on the test mask.
pub fn probe_and_score(
    z: &DenseMatrix,
    labels: &[usize],
    class_count: usize,
    masks: &SplitMasks,
    config: &ProbeConfig,
) -> Result<MetricsReport> {
    let train = LabeledNodes::from_mask(&masks.train, labels);
    let val = LabeledNodes::from_mask(&masks.val, labels);
    let clf = train_probe(z, class_count, &train, &val, config)?;
    let test = SplitMasks::indices(&masks.test);
    let pred = clf.predict(&z.gather_rows(&test))?;
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    compute_metrics(&truth, &pred, class_count)
}

/// Probe seeds `probe.seed, probe.seed + 1, …`, one per run.
pub fn evaluate_embeddings(
    graph: &CitationGraph,
    z: &DenseMatrix,
    probe: &ProbeConfig,
    n_seeds: usize,
) -> Result<AggregateMetrics> {
    let runs = (0..n_seeds.max(1) as u64)
        .map(|k| {
            let cfg = ProbeConfig {
                seed: probe.seed + k,
                ..probe.clone()
            };
            let metrics =
                probe_and_score(z, graph.labels(), graph.class_count(), graph.masks(), &cfg)?;
            Ok(SeedMetrics {
                probe_seed: cfg.seed,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AggregateMetrics::from_runs(runs)
}

pub fn evaluate(
    graph: &CitationGraph,
    params: &ModelParams,
    model: &ModelConfig,
    probe: &ProbeConfig,
    n_seeds: usize,
) -> Result<AggregateMetrics> {
    let z = embed(graph, params, model)?;
    evaluate_embeddings(graph, &z, probe, n_seeds)
}
