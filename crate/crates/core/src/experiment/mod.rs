//! Experiment plumbing shared by the command-line tool: configuration,
//! dataset resolution, run directories and artifact formats, and the
//! ablation and sweep harness.

pub mod config;
pub mod formats;
mod harness;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;

pub use config::{split_override, ExperimentConfig};
pub use harness::{
    ablate, default_threads, sweep, write_ablation, write_sweep, AblationRow, CellResult,
    SweepParam, SweepReport, SweepSummary,
};

use crate::data::{load_citation_dataset, CitationGraph, DatasetStats, KnownDataset, LoadOptions};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_embeddings, AggregateMetrics, Headline};
use crate::model::{embed, ModelParams};
use crate::numerics::{DenseMatrix, Rng};
use crate::training::{train, RunReport};

/// Finds `<name>.content` / `<name>.cites` under `data_dir`, either in a
/// `<name>/` subdirectory or directly.
pub fn locate_dataset(name: &str, data_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if let Ok(known) = KnownDataset::from_str(name) {
        return known.locate(data_dir);
    }
    for dir in [data_dir.join(name), data_dir.to_path_buf()] {
        let content = dir.join(format!("{name}.content"));
        let cites = dir.join(format!("{name}.cites"));
        if content.is_file() && cites.is_file() {
            return Ok((content, cites));
        }
    }
    Err(Error::Config(format!(
        "dataset {name:?} not found under {} (expected {name}.content and {name}.cites)",
        data_dir.display()
    )))
}

/// Loads the configured dataset. The split is deterministic given the file
/// and does not depend on the run seed.
pub fn load_dataset(
    config: &ExperimentConfig,
    data_dir: &Path,
) -> Result<(CitationGraph, DatasetStats)> {
    let (content, cites) = locate_dataset(&config.dataset, data_dir)?;
    let options = LoadOptions {
        row_normalize: config.row_normalize,
        ..LoadOptions::default()
    };
    let (graph, stats) = load_citation_dataset(
        &content,
        &cites,
        &config.split_spec(),
        &options,
        &mut Rng::new(0),
    )?;
    info!(
        "{}: {} nodes, {} features, {} classes, {} undirected edges",
        config.dataset,
        stats.nodes,
        stats.features,
        stats.classes,
        stats.undirected_edges_after_cleanup
    );
    Ok((graph, stats))
}

/// `<dataset>-<variant>-s<seed>-<hash8>` with `+` spelled `_and_` so the
/// name stays shell-friendly.
pub fn run_dir_name(config: &ExperimentConfig) -> String {
    format!(
        "{}-{}-s{}-{}",
        config.dataset,
        config.variant.name().replace('+', "_and_"),
        config.seed(),
        config.hash8()
    )
}

pub const REPORT_FILE: &str = "report.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const EMBEDDINGS_TSV: &str = "embeddings.tsv";
pub const EMBEDDINGS_BIN: &str = "embeddings.bin";
pub const CONFIG_JSON: &str = "config.json";
pub const CONFIG_TXT: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.json";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

/// Trained model and its training report.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub params: ModelParams,
    pub report: RunReport,
    pub embeddings: DenseMatrix,
}

pub fn train_run(graph: &CitationGraph, config: &ExperimentConfig) -> Result<TrainedRun> {
    config.validate()?;
    let (params, report) = train(graph, &config.train)?;
    let embeddings = embed(graph, &params, &config.train.model)?;
    if !embeddings.is_finite() {
        return Err(Error::InvalidArgument(
            "embeddings contain non-finite values".into(),
        ));
    }
    Ok(TrainedRun {
        params,
        report,
        embeddings,
    })
}

/// Train, embed and probe: one cell of an ablation or sweep.
pub fn run_cell(
    graph: &CitationGraph,
    config: &ExperimentConfig,
) -> Result<(TrainedRun, AggregateMetrics)> {
    let run = train_run(graph, config)?;
    let metrics = evaluate_embeddings(graph, &run.embeddings, &config.probe, config.probe_seeds)?;
    Ok((run, metrics))
}

pub enum TrainOutcome {
    Written(PathBuf),
    /// The run directory already holds a finished run.
    Skipped(PathBuf),
}

/// Writes a finished training run: config echo (text and JSON), report,
/// parameter snapshot and TSV embeddings.
pub fn write_run(
    dir: &Path,
    config: &ExperimentConfig,
    graph: &CitationGraph,
    run: &TrainedRun,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(CONFIG_TXT), config.echo_text())?;
    write(&dir.join(CONFIG_JSON), config.echo_json())?;
    write(&dir.join(PARAMS_FILE), formats::encode_params(&run.params))?;
    write(
        &dir.join(EMBEDDINGS_TSV),
        formats::encode_embeddings_tsv(graph.node_ids(), &run.embeddings)?,
    )?;
    // written last: its presence marks the run as complete
    write(&dir.join(REPORT_FILE), to_json(&run.report))?;
    Ok(())
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(REPORT_FILE).is_file() && dir.join(PARAMS_FILE).is_file()
}

pub fn train_into(
    out: &Path,
    graph: &CitationGraph,
    config: &ExperimentConfig,
    force: bool,
) -> Result<TrainOutcome> {
    let dir = out.join(run_dir_name(config));
    if is_complete(&dir) && !force {
        return Ok(TrainOutcome::Skipped(dir));
    }
    let run = train_run(graph, config)?;
    write_run(&dir, config, graph, &run)?;
    Ok(TrainOutcome::Written(dir))
}

/// Reads the config echo back from a run directory.
pub fn read_run_config(dir: &Path) -> Result<ExperimentConfig> {
    let path = dir.join(CONFIG_JSON);
    let text = String::from_utf8(read(&path)?)
        .map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    let mut config = ExperimentConfig::default();
    config.apply_text(&text, &path.display().to_string())?;
    Ok(config)
}

pub fn read_params(dir: &Path) -> Result<ModelParams> {
    let path = dir.join(PARAMS_FILE);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "no parameter snapshot at {}",
            path.display()
        )));
    }
    formats::decode_params(&read(&path)?)
}

/// Embeds the graph with a run's snapshot and probes it; writes
/// `metrics.json`.
pub fn eval_run(dir: &Path, graph: &CitationGraph) -> Result<AggregateMetrics> {
    let config = read_run_config(dir)?;
    let params = read_params(dir)?;
    let z = embed(graph, &params, &config.train.model)?;
    let metrics = evaluate_embeddings(graph, &z, &config.probe, config.probe_seeds)?;
    write(&dir.join(METRICS_FILE), to_json(&metrics))?;
    Ok(metrics)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Tsv,
    Binary,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "bin" | "binary" => Ok(Self::Binary),
            other => Err(Error::Config(format!(
                "unknown embedding format {other:?} (tsv|bin)"
            ))),
        }
    }
}

/// Recomputes embeddings from the snapshot and writes them in `format`.
pub fn export_embeddings(
    dir: &Path,
    graph: &CitationGraph,
    format: EmbeddingFormat,
    out: Option<&Path>,
) -> Result<PathBuf> {
    let config = read_run_config(dir)?;
    let params = read_params(dir)?;
    let z = embed(graph, &params, &config.train.model)?;
    let (default_name, bytes) = match format {
        EmbeddingFormat::Tsv => (
            EMBEDDINGS_TSV,
            formats::encode_embeddings_tsv(graph.node_ids(), &z)?.into_bytes(),
        ),
        EmbeddingFormat::Binary => (EMBEDDINGS_BIN, formats::encode_embeddings_bin(&z)),
    };
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(default_name));
    write(&path, bytes)?;
    Ok(path)
}

pub fn read_embeddings_tsv(path: &Path) -> Result<(Vec<String>, DenseMatrix)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    formats::decode_embeddings_tsv(BufReader::new(f), &path.display().to_string())
}

pub fn headline_tsv_row(label: &str, h: &Headline) -> String {
    format!(
        "{label}\t{}\t{}\t{}",
        h.accuracy, h.macro_f1, h.macro_recall
    )
}
