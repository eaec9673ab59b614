//! Citation-graph data model and Planetoid-format ingestion.

mod graph;
pub mod planetoid;
mod split;

use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use graph::{CitationGraph, DatasetStats};
pub use planetoid::{load_citation_dataset, parse_cites, parse_content, LoadOptions};
pub use split::{split_nodes, SplitMasks, SplitSpec};

use crate::error::{Error, Result};

/// The two citation benchmarks this crate knows how to find on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KnownDataset {
    Cora,
    Citeseer,
}

impl KnownDataset {
    pub fn name(self) -> &'static str {
        match self {
            KnownDataset::Cora => "cora",
            KnownDataset::Citeseer => "citeseer",
        }
    }

    /// Published node / citation / vocabulary / class counts.
    pub fn reference_stats(self) -> (usize, usize, usize, usize) {
        match self {
            KnownDataset::Cora => (2708, 5429, 1433, 7),
            KnownDataset::Citeseer => (3327, 4732, 3703, 6),
        }
    }

    pub fn split_spec(self) -> SplitSpec {
        SplitSpec::planetoid()
    }

    /// Looks for `<dir>/<name>/<name>.{content,cites}`, then
    /// `<dir>/<name>.{content,cites}`.
    pub fn locate(self, data_dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let name = self.name();
        let candidates = [data_dir.join(name), data_dir.to_path_buf()];
        for dir in &candidates {
            let content = dir.join(format!("{name}.content"));
            let cites = dir.join(format!("{name}.cites"));
            if content.is_file() && cites.is_file() {
                return Ok((content, cites));
            }
        }
        Err(Error::Config(format!(
            "{name}.content / {name}.cites not found under {} (or its {name}/ subdirectory)",
            data_dir.display()
        )))
    }
}

impl FromStr for KnownDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cora" => Ok(KnownDataset::Cora),
            "citeseer" => Ok(KnownDataset::Citeseer),
            other => Err(Error::Config(format!(
                "unknown dataset {other:?} (expected cora or citeseer)"
            ))),
        }
    }
}
