//! Ablation and sweep grids. Cells are independent (each owns its seed), so
//! they run on a thread pool and are collected back in grid order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use serde::{Deserialize, Serialize};

use super::{run_cell, to_json, ExperimentConfig};
use crate::data::CitationGraph;
use crate::error::{Error, Result};
use crate::evaluation::{mean_std, Headline};
use crate::model::Components;

fn par_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let threads = threads.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("threads joined")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// One trained-and-probed cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    /// Mean over the cell's probe restarts.
    pub metrics: Headline,
    pub epochs: usize,
    pub best_loss: Option<f64>,
}

fn run_one(graph: &CitationGraph, config: &ExperimentConfig) -> Result<CellResult> {
    let (run, metrics) = run_cell(graph, config)?;
    info!(
        "{} seed {}: accuracy {:.4}",
        config.variant,
        config.seed(),
        metrics.mean.accuracy
    );
    Ok(CellResult {
        seed: config.seed(),
        metrics: metrics.mean,
        epochs: run.report.losses.len(),
        best_loss: run.report.best_loss,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mean: Headline,
    pub std: Headline,
    pub cells: Vec<CellResult>,
}

/// Every variant crossed with every seed.
pub fn ablate(
    graph: &CitationGraph,
    base: &ExperimentConfig,
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<AblationRow>> {
    let variants = Components::variants();
    let grid: Vec<ExperimentConfig> = variants
        .iter()
        .flat_map(|&v| {
            seeds.iter().map(move |&s| {
                let mut c = base.clone();
                c.variant = v;
                c.train.model.components = v;
                c.train.seed = s;
                c
            })
        })
        .collect();
    let cells = par_map(&grid, threads, |c| run_one(graph, c))?;
    Ok(variants
        .iter()
        .zip(cells.chunks(seeds.len().max(1)))
        .map(|(v, cells)| {
            let heads: Vec<Headline> = cells.iter().map(|c| c.metrics).collect();
            let (mean, std) = mean_std(&heads);
            AblationRow {
                variant: v.name(),
                mean,
                std,
                cells: cells.to_vec(),
            }
        })
        .collect())
}

fn table_header() -> &'static str {
    "mean_accuracy\tstd_accuracy\tmean_macro_f1\tstd_macro_f1\tmean_macro_recall\tstd_macro_recall"
}

fn table_stats(mean: &Headline, std: &Headline) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        mean.accuracy,
        std.accuracy,
        mean.macro_f1,
        std.macro_f1,
        mean.macro_recall,
        std.macro_recall
    )
}

/// `ablation.tsv` (one row per variant), `ablation_cells.tsv` and
/// `ablation.json`.
pub fn write_ablation(dir: &Path, rows: &[AblationRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut summary = format!("variant\t{}\n", table_header());
    let mut cells = String::from("variant\tseed\taccuracy\tmacro_f1\tmacro_recall\n");
    for r in rows {
        writeln!(summary, "{}\t{}", r.variant, table_stats(&r.mean, &r.std)).unwrap();
        for c in &r.cells {
            let m = &c.metrics;
            writeln!(
                cells,
                "{}\t{}\t{}\t{}\t{}",
                r.variant, c.seed, m.accuracy, m.macro_f1, m.macro_recall
            )
            .unwrap();
        }
    }
    let w = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    w("ablation.tsv", summary)?;
    w("ablation_cells.tsv", cells)?;
    w("ablation.json", to_json(&rows))
}

/// Parameters the sweep command accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PDrop,
    PreluInit,
    Lr,
    Heads,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PDrop => "p_drop",
            SweepParam::PreluInit => "prelu_init",
            SweepParam::Lr => "lr",
            SweepParam::Heads => "heads",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_drop" | "train.p_drop" => Ok(SweepParam::PDrop),
            "prelu_init" | "encoder.prelu_init" => Ok(SweepParam::PreluInit),
            "lr" | "train.lr" => Ok(SweepParam::Lr),
            "heads" | "encoder.heads" => Ok(SweepParam::Heads),
            other => Err(Error::Config(format!(
                "cannot sweep {other:?}; expected one of p_drop, prelu_init, lr, heads"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: f64,
    pub mean: Headline,
    pub std: Headline,
    pub cells: Vec<CellResult>,
    /// Highest mean accuracy among the swept values (ties all flagged).
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    /// Sorted by value.
    pub rows: Vec<SweepSummary>,
}

pub fn sweep(
    graph: &CitationGraph,
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[String],
    seeds: &[u64],
    threads: usize,
) -> Result<SweepReport> {
    let mut parsed: Vec<(f64, String)> = values
        .iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map(|x| (x, v.trim().to_string()))
                .map_err(|_| Error::Config(format!("sweep value {v:?} is not a number")))
        })
        .collect::<Result<_>>()?;
    parsed.sort_by(|a, b| a.0.total_cmp(&b.0));
    parsed.dedup_by(|a, b| a.0 == b.0);

    let mut grid = Vec::new();
    for (_, raw) in &parsed {
        for &s in seeds {
            let mut c = base.clone();
            c.set(param.name(), raw)?;
            c.train.seed = s;
            c.validate()?;
            grid.push(c);
        }
    }
    let cells = par_map(&grid, threads, |c| run_one(graph, c))?;
    let mut rows: Vec<SweepSummary> = parsed
        .iter()
        .zip(cells.chunks(seeds.len().max(1)))
        .map(|((value, _), cells)| {
            let heads: Vec<Headline> = cells.iter().map(|c| c.metrics).collect();
            let (mean, std) = mean_std(&heads);
            SweepSummary {
                value: *value,
                mean,
                std,
                cells: cells.to_vec(),
                best: false,
            }
        })
        .collect();
    let top = rows
        .iter()
        .map(|r| r.mean.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.iter_mut()
        .for_each(|r| r.best = r.mean.accuracy == top);
    Ok(SweepReport { param, rows })
}

/// `sweep_<param>.tsv` (value, seed, metrics), `sweep_<param>_summary.tsv`
/// and `sweep_<param>.json`.
pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = report.param.name();
    let mut cells = String::from("value\tseed\taccuracy\tmacro_f1\tmacro_recall\n");
    let mut summary = format!("value\t{}\tbest\n", table_header());
    for r in &report.rows {
        for c in &r.cells {
            let m = &c.metrics;
            writeln!(
                cells,
                "{}\t{}\t{}\t{}\t{}",
                r.value, c.seed, m.accuracy, m.macro_f1, m.macro_recall
            )
            .unwrap();
        }
        writeln!(
            summary,
            "{}\t{}\t{}",
            r.value,
            table_stats(&r.mean, &r.std),
            r.best
        )
        .unwrap();
    }
    let w = |file: String, body: String| {
        let p = dir.join(file);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    w(format!("sweep_{name}.tsv"), cells)?;
    w(format!("sweep_{name}_summary.tsv"), summary)?;
    w(format!("sweep_{name}.json"), to_json(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order_and_errors() {
        let xs: Vec<u64> = (0..50).collect();
        let ys = par_map(&xs, 4, |x| Ok(x * 2)).unwrap();
        assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
        let e = par_map(&xs, 3, |&x| {
            if x == 7 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(x)
            }
        });
        assert!(e.is_err());
    }

    #[test]
    fn sweep_param_names() {
        for p in ["p_drop", "prelu_init", "lr", "heads"] {
            assert_eq!(p.parse::<SweepParam>().unwrap().name(), p);
        }
        assert!("patience".parse::<SweepParam>().is_err());
    }
}
