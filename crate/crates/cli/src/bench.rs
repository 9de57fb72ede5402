//! Plain forest vs cascade comparisons on identical splits and seeds.

use std::time::Instant;

use anyhow::Result;
use dbrf::cascade::{predict_cascade, train_cascade, TrainConfig};
use dbrf::data::{train_test_split, Dataset, SplitSpec};
use dbrf::metrics::{accuracy, auc_roc, positive_scores};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rf,
    Dbrf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rf => "rf",
            Method::Dbrf => "dbrf",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub split: usize,
    pub seed: u64,
    pub method: Method,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub n_levels: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub method: Method,
    pub n_runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct Plan {
    /// Random train/test splits; ignored when a fixed test set is given.
    pub splits: usize,
    /// Training runs per split.
    pub seeds: usize,
    pub train_fraction: f64,
    pub stratified: bool,
    pub base_seed: u64,
}

/// The plain-forest counterpart of `cfg`: one level, no elimination, no
/// validation, same tree hyperparameters.
pub fn rf_config(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        n_iterations: 1,
        evolution_enabled: false,
        smart_iteration_enabled: false,
        master_seed: seed,
        ..cfg.clone()
    }
}

/// Train and test one method.
pub fn run_one(
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    method: Method,
) -> Result<RunResult> {
    let cfg = match method {
        Method::Rf => rf_config(cfg, cfg.master_seed),
        Method::Dbrf => cfg.clone(),
    };
    let start = Instant::now();
    let (model, _) = train_cascade(train, &cfg)?;
    let pred = predict_cascade(&model, test)?;
    let seconds = start.elapsed().as_secs_f64();
    let auc = if model.n_classes() == 2 && test.class_counts().iter().all(|&c| c > 0) {
        Some(auc_roc(&positive_scores(&pred)?, test.labels())?)
    } else {
        None
    };
    Ok(RunResult {
        split: 0,
        seed: cfg.master_seed,
        method,
        accuracy: accuracy(&pred.predictions, test.labels())?,
        auc,
        n_levels: model.n_levels(),
        seconds,
    })
}

/// Seed of run `r` on split `s`.
pub fn run_seed(plan: &Plan, split: usize, run: usize) -> u64 {
    plan.base_seed
        .wrapping_add((split * plan.seeds + run) as u64)
}

pub fn run_benchmark(
    data: &Dataset,
    fixed_test: Option<&Dataset>,
    plan: &Plan,
    cfg: &TrainConfig,
    methods: &[Method],
    mut progress: impl FnMut(&RunResult),
) -> Result<Vec<RunResult>> {
    let splits = if fixed_test.is_some() { 1 } else { plan.splits };
    let mut out = Vec::new();
    for s in 0..splits {
        let owned;
        let (train, test) = match fixed_test {
            Some(t) => (data, t),
            None => {
                let spec = SplitSpec {
                    stratified: plan.stratified,
                    ..SplitSpec::new(plan.train_fraction, dbrf::seed::derive(plan.base_seed, s as u64))
                };
                owned = train_test_split(data, spec)?;
                (&owned.0, &owned.1)
            }
        };
        for r in 0..plan.seeds {
            let run_cfg = TrainConfig {
                master_seed: run_seed(plan, s, r),
                ..cfg.clone()
            };
            for &m in methods {
                let mut res = run_one(train, test, &run_cfg, m)?;
                res.split = s;
                progress(&res);
                out.push(res);
            }
        }
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation per method, in method order.
pub fn summarize(runs: &[RunResult]) -> Vec<Summary> {
    let mut methods: Vec<Method> = runs.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|m| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.method == m).collect();
            let acc: Vec<f64> = mine.iter().map(|r| r.accuracy).collect();
            let aucs: Option<Vec<f64>> = mine.iter().map(|r| r.auc).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let auc = aucs.filter(|a| !a.is_empty()).map(|a| mean_std(&a));
            Summary {
                method: m,
                n_runs: mine.len(),
                accuracy_mean,
                accuracy_std,
                auc_mean: auc.map(|a| a.0),
                auc_std: auc.map(|a| a.1),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn write_summary<W: std::io::Write>(w: W, rows: &[Summary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "n_runs", "accuracy_mean", "accuracy_std", "auc_mean", "auc_std"])?;
    for s in rows {
        out.write_record([
            s.method.name().to_string(),
            s.n_runs.to_string(),
            format!("{:.6}", s.accuracy_mean),
            format!("{:.6}", s.accuracy_std),
            opt(s.auc_mean),
            opt(s.auc_std),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-run scores (deterministic) and per-run timings (not).
pub fn write_runs<W: std::io::Write>(w: W, runs: &[RunResult], with_time: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["split", "seed", "method", "accuracy", "auc", "n_levels"];
    if with_time {
        header.push("seconds");
    }
    out.write_record(&header)?;
    for r in runs {
        let mut rec = vec![
            r.split.to_string(),
            r.seed.to_string(),
            r.method.name().to_string(),
            format!("{:.6}", r.accuracy),
            opt(r.auc),
            r.n_levels.to_string(),
        ];
        if with_time {
            rec.push(format!("{:.3}", r.seconds));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
