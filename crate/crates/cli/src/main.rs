use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use afpgnn::experiment::{
    self, ablate, default_threads, split_override, sweep, write_ablation, write_sweep,
    EmbeddingFormat, ExperimentConfig, SweepParam, TrainOutcome,
};
use afpgnn::gradient_suite;

#[derive(Parser)]
#[command(
    name = "afpgnn",
    version,
    about = "Unsupervised citation-graph embeddings"
)]
struct Cli {
    /// Directory holding `<name>.content` / `<name>.cites`.
    #[arg(long, global = true, env = "AFPGNN_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,

    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its run directory.
    Train(TrainArgs),
    /// Probe a trained run and write metrics.json.
    Eval(EvalArgs),
    /// Train and probe every component variant.
    Ablate(GridArgs),
    /// Train and probe across values of one hyperparameter.
    Sweep(SweepArgs),
    /// Re-export a run's embeddings.
    ExportEmbeddings(ExportArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck(GradcheckArgs),
    /// Print dataset statistics as JSON.
    Stats(SpecArgs),
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Configuration file (`key = value` lines or a flat JSON object).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a configuration key, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl SpecArgs {
    /// Defaults, then the config file, then named flags, then `--set`.
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            c.apply_text(&text, &path.display().to_string())?;
        }
        if let Some(d) = &self.dataset {
            c.set("dataset", d)?;
        }
        if let Some(v) = &self.variant {
            c.set("variant", v)?;
        }
        if let Some(s) = self.seed {
            c.set("seed", &s.to_string())?;
        }
        for o in &self.overrides {
            let (k, v) = split_override(o)?;
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Retrain even if the run directory is complete.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory. Without it, the directory is derived from the spec.
    #[arg(long)]
    run: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// One of p_drop, prelu_init, lr, heads.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    run: PathBuf,
    /// tsv or bin.
    #[arg(long, default_value = "tsv")]
    format: String,
    /// Output path; defaults to a file inside the run directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load(config: &ExperimentConfig, data_dir: &Path) -> Result<afpgnn::data::CitationGraph> {
    Ok(experiment::load_dataset(config, data_dir)?.0)
}

fn cmd_train(args: &TrainArgs, data_dir: &Path) -> Result<()> {
    let config = args.spec.resolve()?;
    let graph = load(&config, data_dir)?;
    match experiment::train_into(&args.out, &graph, &config, args.force)? {
        TrainOutcome::Written(dir) => println!("{}", dir.display()),
        TrainOutcome::Skipped(dir) => {
            info!("{} is complete; pass --force to retrain", dir.display());
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, data_dir: &Path) -> Result<()> {
    let dir = match &args.run {
        Some(d) => d.clone(),
        None => args
            .out
            .join(experiment::run_dir_name(&args.spec.resolve()?)),
    };
    if !experiment::is_complete(&dir) {
        bail!("{} is not a finished run; train it first", dir.display());
    }
    let config = experiment::read_run_config(&dir)?;
    let graph = load(&config, data_dir)?;
    let metrics = experiment::eval_run(&dir, &graph)?;
    println!("{}", experiment::to_json(&metrics.mean));
    Ok(())
}

fn seeds_or_default(seeds: &[u64]) -> Result<Vec<u64>> {
    if seeds.is_empty() {
        bail!("--seeds must list at least one seed");
    }
    Ok(seeds.to_vec())
}

fn cmd_ablate(args: &GridArgs, data_dir: &Path) -> Result<()> {
    let config = args.spec.resolve()?;
    if args.spec.variant.is_some() {
        warn!("--variant is ignored by ablate; every variant runs");
    }
    let seeds = seeds_or_default(&args.seeds)?;
    let graph = load(&config, data_dir)?;
    let rows = ablate(
        &graph,
        &config,
        &seeds,
        args.threads.unwrap_or_else(default_threads),
    )?;
    let dir = args
        .out
        .join(format!("{}-ablation-{}", config.dataset, config.hash8()));
    write_ablation(&dir, &rows)?;
    for r in &rows {
        println!("{}", experiment::headline_tsv_row(&r.variant, &r.mean));
    }
    info!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, data_dir: &Path) -> Result<()> {
    let config = args.grid.spec.resolve()?;
    let param: SweepParam = args.param.parse()?;
    let seeds = seeds_or_default(&args.grid.seeds)?;
    let graph = load(&config, data_dir)?;
    let report = sweep(
        &graph,
        &config,
        param,
        &args.values,
        &seeds,
        args.grid.threads.unwrap_or_else(default_threads),
    )?;
    let dir = args.grid.out.join(format!(
        "{}-sweep-{}-{}",
        config.dataset,
        param.name(),
        config.hash8()
    ));
    write_sweep(&dir, &report)?;
    for r in &report.rows {
        let mark = if r.best { "\tbest" } else { "" };
        println!(
            "{}{mark}",
            experiment::headline_tsv_row(&r.value.to_string(), &r.mean)
        );
    }
    info!("wrote {}", dir.display());
    Ok(())
}

fn cmd_export(args: &ExportArgs, data_dir: &Path) -> Result<()> {
    let format: EmbeddingFormat = args.format.parse()?;
    if !args.run.join(experiment::PARAMS_FILE).is_file() {
        bail!("{} has no parameter snapshot", args.run.display());
    }
    let config = experiment::read_run_config(&args.run)?;
    let graph = load(&config, data_dir)?;
    let path = experiment::export_embeddings(&args.run, &graph, format, args.output.as_deref())?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let reports = gradient_suite::run_all(args.seed)?;
    let mut ok = true;
    for r in &reports {
        let status = if r.passes() { "PASS" } else { "FAIL" };
        ok &= r.passes();
        println!(
            "{status}\t{}\tmax_rel_err={:.3e}\tchecked={}\tskipped_kinks={}",
            r.name, r.report.max_relative_error, r.report.checked, r.report.skipped_kinks
        );
    }
    Ok(ok)
}

fn cmd_stats(args: &SpecArgs, data_dir: &Path) -> Result<()> {
    let config = args.resolve()?;
    let (graph, stats) = experiment::load_dataset(&config, data_dir)?;
    let (train, val, test) = graph.masks().sizes();
    let mut out = serde_json::to_value(&stats)?;
    out["train"] = train.into();
    out["val"] = val.into();
    out["test"] = test.into();
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let data_dir = cli.data_dir.as_path();
    match &cli.command {
        Command::Train(a) => cmd_train(a, data_dir)?,
        Command::Eval(a) => cmd_eval(a, data_dir)?,
        Command::Ablate(a) => cmd_ablate(a, data_dir)?,
        Command::Sweep(a) => cmd_sweep(a, data_dir)?,
        Command::ExportEmbeddings(a) => cmd_export(a, data_dir)?,
        Command::Gradcheck(a) => return cmd_gradcheck(a),
        Command::Stats(a) => cmd_stats(a, data_dir)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
