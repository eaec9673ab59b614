//! Fuzz bodies for every parser and decoder. Each must return normally on
//! any input; decoders that accept an input must also round-trip it.

use std::io::Cursor;

use afpgnn::data::planetoid::assemble;
use afpgnn::data::{parse_cites, parse_content, LoadOptions, SplitSpec};
use afpgnn::experiment::{formats, ExperimentConfig};
use afpgnn::numerics::Rng;

pub fn content(data: &[u8]) {
    for row_normalize in [false, true] {
        let options = LoadOptions {
            row_normalize,
            ..LoadOptions::default()
        };
        if let Ok(table) = parse_content(Cursor::new(data), "fuzz", &options) {
            assert_eq!(table.node_ids.len(), table.features.rows());
            assert_eq!(table.labels.len(), table.features.rows());
            assert!(table.labels.iter().all(|&l| l < table.class_names.len()));
        }
    }
}

pub fn cites(data: &[u8]) {
    let _ = parse_cites(Cursor::new(data), "fuzz");
}

/// Content and cites separated by the first NUL byte.
pub fn dataset(data: &[u8]) {
    let split_at = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (content, rest) = data.split_at(split_at);
    let cites = rest.get(1..).unwrap_or(&[]);
    let Ok(table) = parse_content(Cursor::new(content), "fuzz", &LoadOptions::default()) else {
        return;
    };
    let Ok(edges) = parse_cites(Cursor::new(cites), "fuzz") else {
        return;
    };
    let split = SplitSpec {
        per_class_train: 1,
        val: 1,
        test: 1,
        shuffle: true,
    };
    if let Ok((graph, stats)) = assemble(table, &edges, &split, &mut Rng::new(0)) {
        assert_eq!(stats.nodes, graph.node_count());
        assert!(graph.adjacency().is_symmetric());
        assert!(graph.adjacency().has_all_self_loops());
        assert!(graph.masks().is_disjoint());
    }
}

pub fn config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut c = ExperimentConfig::default();
    if c.apply_text(text, "fuzz").is_err() {
        return;
    }
    if c.validate().is_err() {
        return;
    }
    let echo = c.echo_text();
    let mut again = ExperimentConfig::default();
    again.apply_text(&echo, "echo").expect("echo parses");
    assert_eq!(again.echo_text(), echo);
}

pub fn params_bin(data: &[u8]) {
    if let Ok(p) = formats::decode_params(data) {
        assert_eq!(formats::encode_params(&p), data);
    }
}

pub fn embeddings_bin(data: &[u8]) {
    if let Ok(z) = formats::decode_embeddings_bin(data) {
        assert_eq!(formats::encode_embeddings_bin(&z), data);
    }
}

pub fn embeddings_tsv(data: &[u8]) {
    let Ok((ids, z)) = formats::decode_embeddings_tsv(Cursor::new(data), "fuzz") else {
        return;
    };
    let text = formats::encode_embeddings_tsv(&ids, &z).expect("decoded shapes agree");
    let (ids2, z2) = formats::decode_embeddings_tsv(Cursor::new(text.as_bytes()), "echo")
        .expect("encoded text parses");
    assert_eq!(ids, ids2);
    let canonical = |v: f64| {
        if v.is_nan() {
            f64::NAN.to_bits()
        } else {
            v.to_bits()
        }
    };
    assert_eq!(
        z.as_slice()
            .iter()
            .map(|&v| canonical(v))
            .collect::<Vec<_>>(),
        z2.as_slice()
            .iter()
            .map(|&v| canonical(v))
            .collect::<Vec<_>>()
    );
}
