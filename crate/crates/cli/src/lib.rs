//! Command-line front end: train, predict, evaluate, benchmark and grid.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 invariant violation (e.g. a corrupted model file).

pub mod bench;
pub mod grid;
pub mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dbrf::cascade::{predict_cascade, train_cascade, CascadeModel, TrainConfig};
use dbrf::data::{load_csv, load_csv_with_schema, Dataset, MissingPolicy};
use dbrf::metrics::{evaluate, positive_scores};
use dbrf::persist::{load_model, save_model};
use dbrf::{Criterion, Metric, TreeLimits};
use serde_json::json;

use crate::bench::{Method, Plan};
use crate::grid::Bounds;
use crate::manifest::RunManifest;

/// A usage error raised after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "dbrf", version, about = "Cascaded random forests with hard-example mining")]
pub struct Cli {
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true, env = "DBRF_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a cascade and write the model, per-level report and manifest
    Train(TrainArgs),
    /// Predict labels for a CSV
    Predict(PredictArgs),
    /// Score a model on a labelled CSV, with per-level pass rates
    Evaluate(EvaluateArgs),
    /// Compare a plain forest with the cascade over splits and seeds
    Benchmark(BenchmarkArgs),
    /// Export a decision-boundary lattice over two features
    Grid(GridArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MissingArg {
    Drop,
    Impute,
}

impl From<MissingArg> for MissingPolicy {
    fn from(m: MissingArg) -> Self {
        match m {
            MissingArg::Drop => MissingPolicy::Drop,
            MissingArg::Impute => MissingPolicy::Impute,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Supp,
    Conf,
    F1,
    Gini,
    Entropy,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Supp => Metric::Supp,
            MetricArg::Conf => Metric::Conf,
            MetricArg::F1 => Metric::F1,
            MetricArg::Gini => Metric::Gini,
            MetricArg::Entropy => Metric::Entropy,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CriterionArg {
    Gini,
    Entropy,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Gini => Criterion::Gini,
            CriterionArg::Entropy => Criterion::Entropy,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    /// Trees per forest
    #[arg(long, default_value_t = 200)]
    pub trees: usize,
    /// Maximum cascade levels
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Leaf score used to find easy rows
    #[arg(long, value_enum, default_value_t = MetricArg::F1)]
    pub metric: MetricArg,
    /// Split criterion
    #[arg(long, value_enum, default_value_t = CriterionArg::Gini)]
    pub criterion: CriterionArg,
    /// Fraction of lowest-fitness trees dropped per level
    #[arg(long, default_value_t = 0.2)]
    pub evolution_ratio: f64,
    #[arg(long)]
    pub no_evolution: bool,
    #[arg(long)]
    pub no_smart_iter: bool,
    /// Folds for validation accuracy
    #[arg(long, default_value_t = 5)]
    pub kfolds: usize,
    /// Consecutive validation decreases before stopping
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Stop when fewer hard rows remain (default 2 x classes)
    #[arg(long)]
    pub min_hard_rows: Option<usize>,
    /// Keep sigma from before tree elimination
    #[arg(long)]
    pub keep_sigma: bool,
    /// Drop levels whose split was annulled
    #[arg(long)]
    pub discard_annulled: bool,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    /// Features tried per split (default ceil(sqrt(features)))
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            n_iterations: self.iters,
            n_trees: self.trees,
            split_criterion: self.criterion.into(),
            hem_metric: self.metric.into(),
            evolution_ratio: self.evolution_ratio,
            evolution_enabled: !self.no_evolution,
            smart_iteration_enabled: !self.no_smart_iter,
            patience: self.patience,
            k_folds: self.kfolds,
            min_hard_rows: self.min_hard_rows,
            master_seed: self.seed,
            keep_sigma_after_evolution: self.keep_sigma,
            discard_annulled_levels: self.discard_annulled,
            limits: TreeLimits {
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                ..TreeLimits::default()
            },
            feature_subsample: self.max_features,
            bootstrap: true,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Training CSV with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Label column name (default: last column)
    #[arg(long)]
    pub label: Option<String>,
    /// Feature columns to keep, by name or 0-based index, comma separated
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = MissingArg::Drop)]
    pub missing: MissingArg,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Model output path
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Per-level report CSV (default: <model>.report.csv)
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Run manifest (default: <model>.manifest.json)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MissingArg::Drop)]
    pub missing: MissingArg,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Per-level pass-rate CSV
    #[arg(long, default_value = "evaluation.csv")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MissingArg::Drop)]
    pub missing: MissingArg,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fixed test CSV; without it the data is split randomly
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Random train/test splits
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    /// Runs per split
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Draw random splits without per-class stratification
    #[arg(long)]
    pub no_stratify: bool,
    /// Baselines to run next to the cascade
    #[arg(long, value_delimiter = ',', default_value = "rf")]
    pub baselines: Vec<BaselineArg>,
    /// Summary table CSV
    #[arg(long, default_value = "benchmark.csv")]
    pub out: PathBuf,
    /// Per-run scores CSV (default: <out>.runs.csv)
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Per-run timings CSV (default: <out>.timings.csv)
    #[arg(long)]
    pub timings: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Rf,
    None,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Two 0-based model feature indices, e.g. 0,1
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub features: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    /// 'auto' or xmin,xmax,ymin,ymax
    #[arg(long, default_value = "auto")]
    pub bounds: Bounds,
    #[arg(long, default_value = "grid.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<dbrf::Error>() {
            return match err {
                dbrf::Error::Config(_) => 1,
                dbrf::Error::Invariant(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        // fails only if a pool already exists, e.g. when called twice in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Grid(a) => cmd_grid(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Resolve `--features` tokens (names or indices) to column indices.
pub fn resolve_features(d: &Dataset, tokens: &[String]) -> Result<Vec<usize>> {
    let cols = &d.schema().columns;
    tokens
        .iter()
        .map(|t| {
            let t = t.trim();
            if let Some(i) = cols.iter().position(|c| c.name == t) {
                return Ok(i);
            }
            match t.parse::<usize>() {
                Ok(i) if i < cols.len() => Ok(i),
                _ => Err(usage(format!(
                    "unknown feature '{t}' (have {} columns)",
                    cols.len()
                ))),
            }
        })
        .collect()
}

/// Load a training CSV and apply the `--features` selection.
pub fn load_training(a: &DataArgs) -> Result<Dataset> {
    let d = load_csv(&a.data, a.label.as_deref(), a.missing.into())
        .with_context(|| format!("loading {}", a.data.display()))?;
    match &a.features {
        Some(tokens) => {
            let idx = resolve_features(&d, tokens)?;
            Ok(d.select_columns(&idx)?)
        }
        None => Ok(d),
    }
}

fn load_with_schema(path: &Path, model: &CascadeModel, missing: MissingArg) -> Result<dbrf::data::EncodedRows> {
    load_csv_with_schema(path, &model.schema, missing.into())
        .with_context(|| format!("loading {}", path.display()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.hyper.config();
    cfg.validate()?;
    let mut m = RunManifest::new(
        "train",
        Some(cfg.master_seed),
        json!({ "train": cfg, "label": a.data.label, "features": a.data.features }),
    );
    m.add_input(&a.data.data)?;
    let d = m.time("load", || load_training(&a.data))?;
    let (model, report) = m.time("train", || train_cascade(&d, &cfg))?;
    m.time("save", || save_model(&model, &a.model))?;
    let report_path = a
        .report
        .unwrap_or_else(|| suffixed(&a.model, ".report.csv"));
    report.write_csv(create(&report_path)?)?;
    m.add_output(&a.model);
    m.add_output(&report_path);
    let manifest_path = a.manifest.unwrap_or_else(|| manifest::default_path(&a.model));
    m.write(&manifest_path)?;
    println!(
        "trained {} level(s) on {} rows; stop reason: {}",
        model.n_levels(),
        d.n_rows(),
        report.stop_reason.name()
    );
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let mut m = RunManifest::new("predict", None, json!({ "missing": format!("{:?}", a.missing) }));
    m.add_input(&a.model)?;
    m.add_input(&a.data)?;
    let model = m.time("load_model", || load_model(&a.model))?;
    let rows = m.time("load_data", || load_with_schema(&a.data, &model, a.missing))?;
    let binary = model.n_classes() == 2;
    let preds = m.time("predict", || {
        rows.features
            .chunks_exact(rows.n_features)
            .map(|x| model.predict_row(x))
            .collect::<dbrf::Result<Vec<_>>>()
    })?;
    let mut out = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["row_id", "predicted", "level_used"];
    if binary {
        header.push("positive_score");
    }
    out.write_record(&header)?;
    for (id, p) in rows.row_ids.iter().zip(&preds) {
        let mut rec = vec![
            id.to_string(),
            model.schema.class_name(p.class).to_string(),
            p.level.to_string(),
        ];
        if binary {
            let total: u32 = p.votes.iter().sum();
            rec.push((f64::from(p.votes[1]) / f64::from(total)).to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    m.add_output(&a.out);
    m.write(&a.manifest.unwrap_or_else(|| manifest::default_path(&a.out)))?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let mut m = RunManifest::new("evaluate", None, json!({ "missing": format!("{:?}", a.missing) }));
    m.add_input(&a.model)?;
    m.add_input(&a.data)?;
    let model = m.time("load_model", || load_model(&a.model))?;
    let d = load_with_schema(&a.data, &model, a.missing)?.into_dataset(&model.schema)?;
    let pred = m.time("predict", || predict_cascade(&model, &d))?;
    let scores = if model.n_classes() == 2 {
        Some(positive_scores(&pred)?)
    } else {
        None
    };
    let eval = evaluate(&pred.predictions, d.labels(), model.n_classes(), scores.as_deref())?;

    let n_levels = model.n_levels();
    let mut exits = vec![0usize; n_levels];
    let mut hits = vec![0usize; n_levels];
    for ((&l, &p), &y) in pred.level_used.iter().zip(&pred.predictions).zip(d.labels()) {
        exits[l - 1] += 1;
        hits[l - 1] += usize::from(p == y);
    }
    let mut out = csv::Writer::from_writer(create(&a.out)?);
    out.write_record(["level", "n_exit", "pass_rate", "accuracy"])?;
    for l in 0..n_levels {
        let acc = if exits[l] > 0 {
            format!("{:.6}", hits[l] as f64 / exits[l] as f64)
        } else {
            String::new()
        };
        out.write_record([
            (l + 1).to_string(),
            exits[l].to_string(),
            format!("{:.6}", exits[l] as f64 / d.n_rows() as f64),
            acc,
        ])?;
    }
    out.flush()?;
    m.add_output(&a.out);
    m.write(&a.manifest.unwrap_or_else(|| manifest::default_path(&a.out)))?;
    println!("rows: {}", eval.n);
    println!("accuracy: {:.6}", eval.accuracy);
    if let Some(auc) = eval.auc {
        println!("auc: {auc:.6}");
    }
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let cfg = a.hyper.config();
    cfg.validate()?;
    if a.splits == 0 || a.seeds == 0 {
        return Err(usage("--splits and --seeds must be >= 1"));
    }
    let mut m = RunManifest::new(
        "benchmark",
        Some(cfg.master_seed),
        json!({
            "train": cfg,
            "splits": a.splits,
            "seeds": a.seeds,
            "train_fraction": a.train_fraction,
            "stratified": !a.no_stratify,
            "label": a.data.label,
            "features": a.data.features,
        }),
    );
    m.add_input(&a.data.data)?;
    let d = m.time("load", || load_training(&a.data))?;
    let test = match &a.test {
        Some(p) => {
            m.add_input(p)?;
            let rows = load_csv_with_schema(p, d.schema(), a.data.missing.into())
                .with_context(|| format!("loading {}", p.display()))?;
            Some(rows.into_dataset(d.schema())?)
        }
        None => None,
    };
    let mut methods = Vec::new();
    if a.baselines.contains(&BaselineArg::Rf) {
        methods.push(Method::Rf);
    }
    methods.push(Method::Dbrf);
    let plan = Plan {
        splits: a.splits,
        seeds: a.seeds,
        train_fraction: a.train_fraction,
        stratified: !a.no_stratify,
        base_seed: cfg.master_seed,
    };
    let runs = m.time("benchmark", || {
        bench::run_benchmark(&d, test.as_ref(), &plan, &cfg, &methods, |r| {
            eprintln!(
                "split {} seed {} {}: accuracy {:.4}{} ({:.1}s)",
                r.split,
                r.seed,
                r.method.name(),
                r.accuracy,
                r.auc.map_or_else(String::new, |v| format!(", auc {v:.4}")),
                r.seconds
            );
        })
    })?;
    let summary = bench::summarize(&runs);
    bench::write_summary(create(&a.out)?, &summary)?;
    let runs_path = a.runs.unwrap_or_else(|| suffixed(&a.out, ".runs.csv"));
    bench::write_runs(create(&runs_path)?, &runs, false)?;
    let timings_path = a.timings.unwrap_or_else(|| suffixed(&a.out, ".timings.csv"));
    bench::write_runs(create(&timings_path)?, &runs, true)?;
    for p in [&a.out, &runs_path, &timings_path] {
        m.add_output(p);
    }
    m.write(&a.manifest.unwrap_or_else(|| manifest::default_path(&a.out)))?;
    let mut stdout = std::io::stdout().lock();
    bench::write_summary(&mut stdout, &summary)?;
    stdout.flush()?;
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<()> {
    if a.features.len() != 2 {
        return Err(usage("--features takes exactly two indices"));
    }
    let mut m = RunManifest::new(
        "grid",
        None,
        json!({ "features": a.features, "resolution": a.resolution, "bounds": format!("{:?}", a.bounds) }),
    );
    m.add_input(&a.model)?;
    let model = m.time("load_model", || load_model(&a.model))?;
    let points = m
        .time("predict", || {
            grid::grid(&model, a.features[0], a.features[1], a.resolution, a.bounds)
        })
        .map_err(|e| usage(e.to_string()))?;
    grid::write_grid(create(&a.out)?, &model, &points)?;
    m.add_output(&a.out);
    m.write(&a.manifest.unwrap_or_else(|| manifest::default_path(&a.out)))?;
    println!("wrote {} grid points to {}", points.len(), a.out.display());
    Ok(())
}
