use serde::{Deserialize, Serialize};

use super::split::SplitMasks;
use crate::error::{Error, Result};
use crate::numerics::{CsrMatrix, DenseMatrix, SparseAdjacency};

/// A labeled citation graph with its train/validation/test split.
///
/// Features are raw bag-of-words counts held sparse; [`Self::dense_features`]
/// materializes them when an `N × F` matrix is needed.
#[derive(Clone, Debug, PartialEq)]
pub struct CitationGraph {
    features: CsrMatrix,
    adjacency: SparseAdjacency,
    labels: Vec<usize>,
    class_names: Vec<String>,
    masks: SplitMasks,
    node_ids: Vec<String>,
}

impl CitationGraph {
    pub fn new(
        features: CsrMatrix,
        adjacency: SparseAdjacency,
        labels: Vec<usize>,
        class_names: Vec<String>,
        masks: SplitMasks,
        node_ids: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if adjacency.node_count() != n
            || labels.len() != n
            || node_ids.len() != n
            || masks.len() != n
        {
            return Err(Error::shape(
                "CitationGraph::new",
                format!("{n} nodes everywhere"),
                format!(
                    "adjacency {}, labels {}, ids {}, masks {}",
                    adjacency.node_count(),
                    labels.len(),
                    node_ids.len(),
                    masks.len()
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if !masks.is_disjoint() {
            return Err(Error::Split("train/val/test masks overlap".into()));
        }
        Ok(Self {
            features,
            adjacency,
            labels,
            class_names,
            masks,
            node_ids,
        })
    }

    /// Graph without a meaningful split (every node in test), for unlabeled
    /// use and fixtures.
    pub fn unsplit(
        features: CsrMatrix,
        adjacency: SparseAdjacency,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let n = features.rows();
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        let node_ids = (0..n).map(|i| i.to_string()).collect();
        Self::new(
            features,
            adjacency,
            labels,
            class_names,
            SplitMasks::all_test(n),
            node_ids,
        )
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &CsrMatrix {
        &self.features
    }

    pub fn dense_features(&self) -> DenseMatrix {
        self.features.to_dense()
    }

    pub fn adjacency(&self) -> &SparseAdjacency {
        &self.adjacency
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn masks(&self) -> &SplitMasks {
        &self.masks
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn with_masks(mut self, masks: SplitMasks) -> Result<Self> {
        if masks.len() != self.node_count() || !masks.is_disjoint() {
            return Err(Error::Split(
                "masks must be disjoint and cover every node index".into(),
            ));
        }
        self.masks = masks;
        Ok(self)
    }

    /// Node relabeling: node `i` of the result is node `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let pick = |m: &[bool]| order.iter().map(|&o| m[o]).collect::<Vec<_>>();
        let masks = SplitMasks {
            train: pick(&self.masks.train),
            val: pick(&self.masks.val),
            test: pick(&self.masks.test),
        };
        Self::new(
            self.features.gather_rows(order),
            self.adjacency.permuted(order)?,
            order.iter().map(|&o| self.labels[o]).collect(),
            self.class_names.clone(),
            masks,
            order.iter().map(|&o| self.node_ids[o].clone()).collect(),
        )
    }
}

/// Table-style summary of a loaded dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub nodes: usize,
    pub raw_directed_edges: usize,
    pub undirected_edges_after_cleanup: usize,
    pub dropped_dangling_edges: usize,
    pub features: usize,
    pub classes: usize,
}
