//! Multinomial logistic regression on frozen embeddings.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::activation::softmax_in_place;
use crate::numerics::{adam_step, AdamState, DenseMatrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 300,
            l2: 1e-5,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.epochs == 0 || !(self.l2 >= 0.0) {
            return Err(Error::Config(format!(
                "probe needs lr > 0, epochs > 0, l2 >= 0 (got {}, {}, {})",
                self.lr, self.epochs, self.l2
            )));
        }
        Ok(())
    }
}

/// Node indices with their labels. The probe only ever sees train and
/// validation nodes in this form, so test labels cannot leak in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledNodes {
    pub nodes: Vec<usize>,
    pub labels: Vec<usize>,
}

impl LabeledNodes {
    pub fn from_mask(mask: &[bool], labels: &[usize]) -> Self {
        let nodes: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let labels = nodes.iter().map(|&i| labels[i]).collect();
        Self { nodes, labels }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// `d × C`
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
    /// Epoch of the kept snapshot, 0 being the initialization.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
}

impl LinearClassifier {
    pub fn logits(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = z.matmul(&self.weights)?;
        for r in 0..out.rows() {
            out.row_mut(r)
                .iter_mut()
                .zip(&self.bias)
                .for_each(|(v, b)| *v += b);
        }
        Ok(out)
    }

    /// Arg-max class per row, ties to the lowest index.
    pub fn predict(&self, z: &DenseMatrix) -> Result<Vec<usize>> {
        let logits = self.logits(z)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    fn accuracy(&self, z: &DenseMatrix, set: &LabeledNodes) -> Result<f64> {
        let pred = self.predict(&z.gather_rows(&set.nodes))?;
        let correct = pred.iter().zip(&set.labels).filter(|(a, b)| a == b).count();
        Ok(correct as f64 / set.len() as f64)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over `x` plus `l2/2 · ‖W‖²`, and its gradient in
/// the flat `[W row-major, b]` layout.
pub fn probe_loss_and_grad(
    x: &DenseMatrix,
    labels: &[usize],
    weights: &DenseMatrix,
    bias: &[f64],
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    let (d, c) = weights.shape();
    let n = x.rows();
    let mut probs = x.matmul(weights)?;
    let mut loss = 0.0;
    for r in 0..n {
        let row = probs.row_mut(r);
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
        softmax_in_place(row);
        loss -= row[labels[r]].max(f64::MIN_POSITIVE).ln();
        row[labels[r]] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    loss /= n as f64;
    loss += 0.5 * l2 * weights.as_slice().iter().map(|w| w * w).sum::<f64>();

    let mut grad_w = x.transpose_matmul(&probs)?;
    for (g, &w) in grad_w.as_mut_slice().iter_mut().zip(weights.as_slice()) {
        *g += l2 * w;
    }
    let mut grad = grad_w.into_vec();
    grad.extend(probs.column_sums());
    debug_assert_eq!(grad.len(), d * c + c);
    Ok((loss, grad))
}

/// Full-batch Adam on the train nodes; keeps the snapshot with the best
/// validation accuracy (the first one on ties, the final one without
/// validation nodes).
pub fn train_probe(
    z: &DenseMatrix,
    class_count: usize,
    train: &LabeledNodes,
    val: &LabeledNodes,
    config: &ProbeConfig,
) -> Result<LinearClassifier> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "probe needs at least one training node".into(),
        ));
    }
    for set in [train, val] {
        if set.nodes.len() != set.labels.len() {
            return Err(Error::shape(
                "labeled nodes",
                set.nodes.len(),
                set.labels.len(),
            ));
        }
        if let Some(&i) = set.nodes.iter().find(|&&i| i >= z.rows()) {
            return Err(Error::InvalidArgument(format!("node {i} out of range")));
        }
        if let Some(&l) = set.labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!("label {l} out of range")));
        }
    }
    let mut present = vec![false; class_count];
    train.labels.iter().for_each(|&l| present[l] = true);
    let missing: Vec<usize> = (0..class_count).filter(|&c| !present[c]).collect();
    if !missing.is_empty() {
        warn!("classes {missing:?} have no training nodes and cannot be learned");
    }

    let d = z.cols();
    let x = z.gather_rows(&train.nodes);
    let mut rng = Rng::new(config.seed);
    let bound = (6.0 / (d + class_count) as f64).sqrt();
    let weights = DenseMatrix::from_fn(d, class_count, |_, _| rng.uniform_range(-bound, bound));
    let mut current = LinearClassifier {
        weights,
        bias: vec![0.0; class_count],
        best_epoch: 0,
        best_val_accuracy: None,
    };
    let mut flat: Vec<f64> = current.weights.as_slice().to_vec();
    flat.extend_from_slice(&current.bias);
    let mut adam = AdamState::new(flat.len());
    let mut best: Option<LinearClassifier> = None;

    for epoch in 0..=config.epochs {
        if !val.is_empty() {
            let acc = current.accuracy(z, val)?;
            if best
                .as_ref()
                .is_none_or(|b| acc > b.best_val_accuracy.unwrap_or(-1.0))
            {
                best = Some(LinearClassifier {
                    best_epoch: epoch,
                    best_val_accuracy: Some(acc),
                    ..current.clone()
                });
            }
        }
        if epoch == config.epochs {
            break;
        }
        let (_, grad) = probe_loss_and_grad(
            &x,
            &train.labels,
            &current.weights,
            &current.bias,
            config.l2,
        )?;
        adam_step(&mut flat, &grad, &mut adam, config.lr)?;
        let (w, b) = flat.split_at(d * class_count);
        current.weights = DenseMatrix::from_vec(d, class_count, w.to_vec())?;
        current.bias = b.to_vec();
        current.best_epoch = epoch + 1;
    }
    Ok(best.unwrap_or(current))
}
