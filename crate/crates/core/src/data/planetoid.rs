//! Planetoid raw text format.
//!
//! `<name>.content`: one node per line, whitespace separated,
//! `<node_id> <f_1> ... <f_F> <label>`. Every line carries the same number of
//! features. Node ids and labels are arbitrary tokens without whitespace.
//!
//! `<name>.cites`: one citation per line, `<cited_id> <citing_id>`.
//!
//! Blank lines are ignored in both files.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{CitationGraph, DatasetStats};
use super::split::{split_nodes, SplitSpec};
use crate::error::{Error, Result};
use crate::numerics::{CsrMatrix, Rng, SparseAdjacency};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Reject feature values other than 0 and 1.
    pub binary_features: bool,
    /// Declared class names, in class-index order. When absent, classes are
    /// the sorted set of labels seen in the content file.
    pub classes: Option<Vec<String>>,
    /// Scale each feature row to unit L1 norm after loading.
    pub row_normalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            binary_features: true,
            classes: None,
            row_normalize: false,
        }
    }
}

/// Parsed `.content` file.
#[derive(Clone, Debug)]
pub struct ContentTable {
    pub node_ids: Vec<String>,
    pub features: CsrMatrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

pub fn parse_content<R: BufRead>(
    reader: R,
    source: &str,
    options: &LoadOptions,
) -> Result<ContentTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };

    let mut node_ids = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut raw_labels: Vec<(String, usize)> = Vec::new();
    let mut feature_count: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| err(line_no, format!("read failed: {e}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(err(
                line_no,
                format!(
                    "expected `<id> <features...> <label>`, got {} fields",
                    fields.len()
                ),
            ));
        }
        let n_feat = fields.len() - 2;
        match feature_count {
            None => feature_count = Some(n_feat),
            Some(f) if f != n_feat => {
                return Err(err(line_no, format!("expected {f} features, got {n_feat}")));
            }
            Some(_) => {}
        }
        let id = fields[0];
        if let Some(prev) = seen_ids.insert(id.to_string(), line_no) {
            return Err(err(
                line_no,
                format!("duplicate node id {id:?} (first seen on line {prev})"),
            ));
        }
        let mut entries = Vec::new();
        for (c, tok) in fields[1..fields.len() - 1].iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                err(
                    line_no,
                    format!("feature {} is not a number: {tok:?}", c + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(err(
                    line_no,
                    format!("feature {} is not finite: {tok:?}", c + 1),
                ));
            }
            if options.binary_features && v != 0.0 && v != 1.0 {
                return Err(err(
                    line_no,
                    format!("feature {} is not binary: {tok:?}", c + 1),
                ));
            }
            if v != 0.0 {
                entries.push((c, v));
            }
        }
        node_ids.push(id.to_string());
        rows.push(entries);
        raw_labels.push((fields[fields.len() - 1].to_string(), line_no));
    }

    let feature_count =
        feature_count.ok_or_else(|| err(0, "content file has no node rows".into()))?;

    let class_names: Vec<String> = match &options.classes {
        Some(declared) => declared.clone(),
        None => raw_labels
            .iter()
            .map(|(l, _)| l.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let class_index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .map(|(l, line_no)| {
            class_index
                .get(l.as_str())
                .copied()
                .ok_or_else(|| err(*line_no, format!("unknown label {l:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut features = CsrMatrix::from_row_entries(feature_count, &rows)?;
    if options.row_normalize {
        features = features.row_normalized();
    }
    Ok(ContentTable {
        node_ids,
        features,
        labels,
        class_names,
    })
}

/// Parsed `.cites` file: `(cited, citing)` pairs in file order.
pub fn parse_cites<R: BufRead>(reader: R, source: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message: format!("read failed: {e}"),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [cited, citing] => out.push((cited.to_string(), citing.to_string())),
            _ => {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: line_no,
                    message: format!(
                        "expected `<cited_id> <citing_id>`, got {} fields",
                        fields.len()
                    ),
                })
            }
        }
    }
    Ok(out)
}

/// Joins a parsed content table with its citations and assigns the split.
///
/// Citations whose endpoints are not both content rows are dropped and
/// counted. Exact duplicate lines count once toward `raw_directed_edges`;
/// reversed duplicates and direction are merged when the adjacency is
/// symmetrized.
pub fn assemble(
    content: ContentTable,
    cites: &[(String, String)],
    split: &SplitSpec,
    rng: &mut Rng,
) -> Result<(CitationGraph, DatasetStats)> {
    let index: HashMap<&str, usize> = content
        .node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut distinct: HashSet<(&str, &str)> = HashSet::new();
    let mut edges = Vec::new();
    let mut dropped = 0usize;
    for (cited, citing) in cites {
        if !distinct.insert((cited.as_str(), citing.as_str())) {
            continue;
        }
        match (index.get(cited.as_str()), index.get(citing.as_str())) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => dropped += 1,
        }
    }

    let n = content.node_ids.len();
    let adjacency = SparseAdjacency::from_edges(n, &edges)?;
    let class_count = content.class_names.len();
    let masks = split_nodes(&content.labels, class_count, split, rng)?;

    let stats = DatasetStats {
        nodes: n,
        raw_directed_edges: distinct.len(),
        undirected_edges_after_cleanup: adjacency.undirected_edge_count(),
        dropped_dangling_edges: dropped,
        features: content.features.cols(),
        classes: class_count,
    };
    let graph = CitationGraph::new(
        content.features,
        adjacency,
        content.labels,
        content.class_names,
        masks,
        content.node_ids,
    )?;
    Ok((graph, stats))
}

/// Reads a `.content` / `.cites` pair from disk.
pub fn load_citation_dataset(
    content_path: &Path,
    cites_path: &Path,
    split: &SplitSpec,
    options: &LoadOptions,
    rng: &mut Rng,
) -> Result<(CitationGraph, DatasetStats)> {
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Error::io(p, e))
    };
    let content = parse_content(
        open(content_path)?,
        &content_path.display().to_string(),
        options,
    )?;
    let cites = parse_cites(open(cites_path)?, &cites_path.display().to_string())?;
    assemble(content, &cites, split, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> LoadOptions {
        LoadOptions::default()
    }

    #[test]
    fn toy_dataset() {
        let content = "A 1 0 x\nB 0 1 y\nC 1 1 x\n";
        let cites = "B A\n";
        let table = parse_content(content.as_bytes(), "toy.content", &opts()).unwrap();
        let cites = parse_cites(cites.as_bytes(), "toy.cites").unwrap();
        let spec = SplitSpec {
            per_class_train: 0,
            val: 0,
            test: 3,
            shuffle: false,
        };
        let (g, stats) = assemble(table, &cites, &spec, &mut Rng::new(0)).unwrap();
        assert_eq!(stats.nodes, 3);
        assert_eq!(stats.raw_directed_edges, 1);
        assert_eq!(stats.undirected_edges_after_cleanup, 1);
        let adj = g.adjacency();
        assert_eq!(adj.neighbors(0), &[0, 1]);
        assert_eq!(adj.neighbors(1), &[0, 1]);
        assert_eq!(adj.neighbors(2), &[2]);
        assert_eq!(g.labels(), &[0, 1, 0]);
        assert_eq!(g.class_names(), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn dangling_and_duplicate_citations() {
        let content = "1 0 1 a\n2 1 0 b\n3 1 1 a\n";
        let cites = "1 2\n1 2\n2 1\n9 1\n3 3\n";
        let table = parse_content(content.as_bytes(), "c", &opts()).unwrap();
        let cites = parse_cites(cites.as_bytes(), "e").unwrap();
        let spec = SplitSpec {
            per_class_train: 1,
            val: 0,
            test: 1,
            shuffle: false,
        };
        let (g, stats) = assemble(table, &cites, &spec, &mut Rng::new(0)).unwrap();
        assert_eq!(stats.raw_directed_edges, 4);
        assert_eq!(stats.dropped_dangling_edges, 1);
        assert_eq!(stats.undirected_edges_after_cleanup, 1);
        assert!(g.adjacency().has_all_self_loops());
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let e = parse_content("a 1 0 x\nb 1 y\n".as_bytes(), "f", &opts()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_content("a 1 0 x\n\nb 1 2 y\n".as_bytes(), "f", &opts()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_content(
            "a 1 x\nb 0 q\n".as_bytes(),
            "f",
            &LoadOptions {
                classes: Some(vec!["x".into()]),
                ..opts()
            },
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(e.to_string().contains("unknown label"));
        let e = parse_content("a 1 x\na 0 x\n".as_bytes(), "f", &opts()).unwrap_err();
        assert!(e.to_string().contains("duplicate"));
        let e = parse_cites("a b\nc\n".as_bytes(), "e").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_content("".as_bytes(), "f", &opts()).is_err());
    }

    #[test]
    fn non_binary_allowed_when_not_declared() {
        let o = LoadOptions {
            binary_features: false,
            ..opts()
        };
        let t = parse_content("a 2.5 0 x\n".as_bytes(), "f", &o).unwrap();
        assert_eq!(t.features.to_dense().get(0, 0), 2.5);
        assert!(parse_content("a nan 0 x\n".as_bytes(), "f", &o).is_err());
    }

    #[test]
    fn row_normalization() {
        let o = LoadOptions {
            row_normalize: true,
            ..opts()
        };
        let t = parse_content("a 1 1 0 1 x\nb 0 0 0 0 x\n".as_bytes(), "f", &o).unwrap();
        let d = t.features.to_dense();
        assert!((d.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(d.row(1), &[0.0; 4]);
    }
}
