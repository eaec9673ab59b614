//! Seeded synthetic graphs for tests, gradient checks and smoke runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{CitationGraph, SplitSpec};
use crate::error::{Error, Result};
use crate::numerics::{CsrMatrix, DenseMatrix, Rng, SparseAdjacency};

/// Random undirected graph: each pair is linked with probability `p`.
pub fn random_adjacency(n: usize, p: f64, rng: &mut Rng) -> SparseAdjacency {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.uniform() < p {
                edges.push((i, j));
            }
        }
    }
    SparseAdjacency::from_edges(n, &edges).expect("indices in range")
}

/// Dense uniform features in `[-1, 1)`.
pub fn random_features(n: usize, f: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_fn(n, f, |_, _| rng.uniform_range(-1.0, 1.0))
}

/// Small graph with continuous features, all nodes in the test mask. Used
/// for gradient checks, where binary features would put every max-pool
/// entry on a tie.
pub fn random_graph(n: usize, f: usize, classes: usize, rng: &mut Rng) -> CitationGraph {
    let adjacency = random_adjacency(n, 0.4, rng);
    let features = CsrMatrix::from_dense(&random_features(n, f, rng));
    let labels = (0..n).map(|i| i % classes.max(1)).collect();
    CitationGraph::unsplit(features, adjacency, labels, classes.max(1)).expect("consistent fixture")
}

/// Parameters of a planted-partition citation corpus.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Words drawn from the node's own class block per document.
    pub topic_words: usize,
    /// Words drawn uniformly from the whole vocabulary per document.
    pub noise_words: usize,
    /// Citations per node on average.
    pub mean_degree: f64,
    /// Probability that a citation stays within the class.
    pub homophily: f64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            nodes: 300,
            classes: 3,
            features: 60,
            topic_words: 6,
            noise_words: 4,
            mean_degree: 4.0,
            homophily: 0.85,
        }
    }
}

impl SyntheticCorpus {
    /// Split that fits the corpus: 5 per class, then 1/5 val, 2/5 test.
    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            per_class_train: 5,
            val: self.nodes / 5,
            test: 2 * self.nodes / 5,
            shuffle: false,
        }
    }

    /// `.content` and `.cites` text.
    pub fn render(&self, rng: &mut Rng) -> Result<(String, String)> {
        if self.classes == 0 || self.features < self.classes || self.nodes < 2 * self.classes {
            return Err(Error::InvalidArgument("synthetic corpus too small".into()));
        }
        let block = self.features / self.classes;
        let label = |i: usize| i % self.classes;
        let mut content = String::new();
        let mut row = vec![0u8; self.features];
        for i in 0..self.nodes {
            row.iter_mut().for_each(|v| *v = 0);
            let c = label(i);
            for _ in 0..self.topic_words {
                row[c * block + rng.index(block)] = 1;
            }
            for _ in 0..self.noise_words {
                row[rng.index(self.features)] = 1;
            }
            write!(content, "n{i}").unwrap();
            for v in &row {
                write!(content, "\t{v}").unwrap();
            }
            writeln!(content, "\tclass_{c}").unwrap();
        }

        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.classes];
        for i in 0..self.nodes {
            by_class[label(i)].push(i);
        }
        let mut cites = String::new();
        let citations = (self.nodes as f64 * self.mean_degree / 2.0).round() as usize;
        for _ in 0..citations {
            let a = rng.index(self.nodes);
            let b = if rng.uniform() < self.homophily {
                let same = &by_class[label(a)];
                same[rng.index(same.len())]
            } else {
                rng.index(self.nodes)
            };
            if a != b {
                writeln!(cites, "n{a}\tn{b}").unwrap();
            }
        }
        Ok((content, cites))
    }

    /// Writes `<dir>/<name>.content` and `<dir>/<name>.cites`.
    pub fn write(&self, dir: &Path, name: &str, rng: &mut Rng) -> Result<(PathBuf, PathBuf)> {
        let (content, cites) = self.render(rng)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cp = dir.join(format!("{name}.content"));
        let ep = dir.join(format!("{name}.cites"));
        fs::write(&cp, content).map_err(|e| Error::io(&cp, e))?;
        fs::write(&ep, cites).map_err(|e| Error::io(&ep, e))?;
        Ok((cp, ep))
    }
}
