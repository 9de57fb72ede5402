//! Cascaded training and prediction.
//!
//! Training repeats: fit a forest on the current set `D`, score its leaves,
//! optionally drop the weakest trees, split `D` into easy and hard rows, and
//! continue on the hard rows. Smart iteration adds two guards based on
//! out-of-fold accuracy on `D`:
//!
//! - if the easy rows validate worse than `D` as a whole, the split is
//!   annulled and the next level trains on `D` again;
//! - after `patience` consecutive strict decreases of that accuracy,
//!   training stops.
//!
//! Prediction walks the levels in order: a row leaves at the first level
//! where it is easy and gets that level's vote; rows that are never easy get
//! the last level's vote.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{class_counts, kfold_indices, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::evolve::{select_survivors, tree_fitness};
use crate::forest::{fit_forest, Forest, ForestConfig, LeafMatrix};
use crate::hem::{easy_mask, score_table_from_routes, split_by_mask, LeafScoreTable, Metric};
use crate::seed;
use crate::tree::{argmax, Criterion, TreeLimits};

/// Stream offset for validation folds, far above any tree index.
const FOLD_STREAM: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_iterations: usize,
    pub n_trees: usize,
    pub split_criterion: Criterion,
    pub hem_metric: Metric,
    pub evolution_ratio: f64,
    pub evolution_enabled: bool,
    pub smart_iteration_enabled: bool,
    /// Consecutive validation-accuracy decreases before stopping.
    pub patience: usize,
    pub k_folds: usize,
    /// Stop once the hard set is smaller than this; `None` means
    /// `2 * n_classes`.
    pub min_hard_rows: Option<usize>,
    pub master_seed: u64,
    /// Keep sigma from before tree elimination instead of recomputing it over
    /// the survivors.
    pub keep_sigma_after_evolution: bool,
    /// Drop levels whose split was annulled instead of keeping their forest.
    pub discard_annulled_levels: bool,
    pub limits: TreeLimits,
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_iterations: 10,
            n_trees: 200,
            split_criterion: Criterion::Gini,
            hem_metric: Metric::F1,
            evolution_ratio: 0.2,
            evolution_enabled: true,
            smart_iteration_enabled: true,
            patience: 5,
            k_folds: 5,
            min_hard_rows: None,
            master_seed: 0,
            keep_sigma_after_evolution: false,
            discard_annulled_levels: false,
            limits: TreeLimits::default(),
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

impl TrainConfig {
    /// Single-level configuration equivalent to a plain random forest.
    pub fn plain_forest(n_trees: usize, master_seed: u64) -> Self {
        TrainConfig {
            n_iterations: 1,
            n_trees,
            evolution_enabled: false,
            smart_iteration_enabled: false,
            master_seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_iterations", self.n_iterations),
            ("n_trees", self.n_trees),
            ("patience", self.patience),
        ] {
            if v < 1 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.k_folds < 2 {
            return Err(Error::config("k_folds must be >= 2"));
        }
        if self.min_hard_rows == Some(0) {
            return Err(Error::config("min_hard_rows must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.evolution_ratio) {
            return Err(Error::config(format!(
                "evolution_ratio {} not in [0, 1)",
                self.evolution_ratio
            )));
        }
        self.forest_config().validate()
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            criterion: self.split_criterion,
            limits: self.limits,
            feature_subsample: self.feature_subsample,
            bootstrap: self.bootstrap,
        }
    }

    pub fn min_hard_rows_for(&self, n_classes: usize) -> usize {
        self.min_hard_rows.unwrap_or(2 * n_classes)
    }
}

/// Seed of the forest trained at iteration `iteration` (0-based). Iteration 0
/// uses the master seed itself, so a one-level cascade reproduces
/// `fit_forest(d, cfg, master_seed)`.
pub fn level_seed(master_seed: u64, iteration: usize) -> u64 {
    if iteration == 0 {
        master_seed
    } else {
        seed::derive(master_seed, iteration as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeLevel {
    pub level_index: usize,
    pub forest: Forest,
    pub score_table: LeafScoreTable,
}

impl CascadeLevel {
    pub(crate) fn is_easy_unchecked(&self, x: &[f64]) -> bool {
        let sigma = self.score_table.sigma();
        self.forest
            .trees()
            .iter()
            .enumerate()
            .all(|(t, tree)| self.score_table.score(t, tree.route_unchecked(x)) > sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub levels: Vec<CascadeLevel>,
    pub schema: FeatureSchema,
    pub config: TrainConfig,
}

/// Outcome for a single row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowPrediction {
    pub class: u32,
    /// 1-based level the row exited at.
    pub level: usize,
    /// Votes of the exit level's trees.
    pub votes: Vec<u32>,
}

impl CascadeModel {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    /// Structural checks: at least one level, consistent shapes, every leaf
    /// scored, and sigma equal to the mean score unless it was frozen
    /// before tree elimination.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.levels.is_empty() {
            return Err(Error::invariant("model has no levels"));
        }
        let sigma_frozen = self.config.evolution_enabled && self.config.keep_sigma_after_evolution;
        for (i, level) in self.levels.iter().enumerate() {
            if level.level_index != i {
                return Err(Error::invariant(format!(
                    "level {i} carries index {}",
                    level.level_index
                )));
            }
            level
                .forest
                .validate()
                .map_err(|e| Error::invariant(format!("level {i}: {e}")))?;
            if level.forest.n_classes() != self.n_classes()
                || level.forest.n_features() != self.n_features()
            {
                return Err(Error::invariant(format!(
                    "level {i}: forest shape does not match the schema"
                )));
            }
            level
                .score_table
                .check_coverage(&level.forest)
                .map_err(|e| Error::invariant(format!("level {i}: {e}")))?;
            let mean = level.score_table.mean();
            if !sigma_frozen && (level.score_table.sigma() - mean).abs() > 1e-9 * mean.abs().max(1.0)
            {
                return Err(Error::invariant(format!(
                    "level {i}: sigma {} differs from mean score {mean}",
                    level.score_table.sigma()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn predict_row_unchecked(&self, x: &[f64]) -> RowPrediction {
        let last = self.levels.len() - 1;
        let level = self.levels[..last]
            .iter()
            .position(|l| l.is_easy_unchecked(x))
            .unwrap_or(last);
        let votes = self.levels[level].forest.vote_counts_unchecked(x);
        RowPrediction {
            class: argmax(&votes),
            level: level + 1,
            votes,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<RowPrediction> {
        self.check_width(x.len())?;
        Ok(self.predict_row_unchecked(x))
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: width,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadePrediction {
    pub predictions: Vec<u32>,
    /// 1-based exit level per row.
    pub level_used: Vec<usize>,
    /// Exit-level votes per row.
    pub votes: Vec<Vec<u32>>,
}

impl CascadePrediction {
    /// Fraction of rows exiting at each level (index 0 = level 1).
    pub fn pass_rates(&self, n_levels: usize) -> Vec<f64> {
        let mut counts = vec![0usize; n_levels];
        for &l in &self.level_used {
            counts[l - 1] += 1;
        }
        let n = self.level_used.len().max(1) as f64;
        counts.iter().map(|&c| c as f64 / n).collect()
    }
}

pub fn predict_cascade(m: &CascadeModel, test: &Dataset) -> Result<CascadePrediction> {
    m.check_width(test.n_features())?;
    if m.levels.is_empty() {
        return Err(Error::invariant("model has no levels"));
    }
    let rows: Vec<RowPrediction> = test
        .features()
        .par_chunks(m.n_features())
        .map(|x| m.predict_row_unchecked(x))
        .collect();
    let mut out = CascadePrediction {
        predictions: Vec::with_capacity(rows.len()),
        level_used: Vec::with_capacity(rows.len()),
        votes: Vec::with_capacity(rows.len()),
    };
    for r in rows {
        out.predictions.push(r.class);
        out.level_used.push(r.level);
        out.votes.push(r.votes);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleTriggered {
    None,
    AnnulDivision,
    EarlyStop,
}

impl RuleTriggered {
    pub fn name(self) -> &'static str {
        match self {
            RuleTriggered::None => "none",
            RuleTriggered::AnnulDivision => "annul_division",
            RuleTriggered::EarlyStop => "early_stop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    IterationBudget,
    EarlyStop,
    HardSetTooSmall,
    HardSetSingleClass,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::IterationBudget => "iteration_budget",
            StopReason::EarlyStop => "early_stop",
            StopReason::HardSetTooSmall => "hard_set_too_small",
            StopReason::HardSetSingleClass => "hard_set_single_class",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// 1-based training iteration.
    pub iteration: usize,
    pub n_rows_in: usize,
    pub n_easy: usize,
    pub n_hard: usize,
    pub class_counts_in: Vec<usize>,
    pub class_counts_hard: Vec<usize>,
    pub n_trees_kept: usize,
    pub sigma: f64,
    pub validation_accuracy: Option<f64>,
    pub easy_validation_accuracy: Option<f64>,
    pub rule_triggered: RuleTriggered,
    /// Whether the split fed the next iteration.
    pub division_applied: bool,
    /// Whether the level was stored in the model.
    pub level_kept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub levels: Vec<LevelReport>,
    pub stop_reason: StopReason,
}

impl TrainReport {
    /// One row per iteration. Class counts are `;`-joined.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "iteration",
            "n_rows_in",
            "n_easy",
            "n_hard",
            "class_counts_in",
            "class_counts_hard",
            "n_trees_kept",
            "sigma",
            "validation_accuracy",
            "easy_validation_accuracy",
            "rule_triggered",
            "division_applied",
            "level_kept",
        ])?;
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";")
        };
        let opt = |v: Option<f64>| v.map_or_else(String::new, |a| a.to_string());
        for l in &self.levels {
            out.write_record([
                l.iteration.to_string(),
                l.n_rows_in.to_string(),
                l.n_easy.to_string(),
                l.n_hard.to_string(),
                join(&l.class_counts_in),
                join(&l.class_counts_hard),
                l.n_trees_kept.to_string(),
                l.sigma.to_string(),
                opt(l.validation_accuracy),
                opt(l.easy_validation_accuracy),
                l.rule_triggered.name().to_string(),
                l.division_applied.to_string(),
                l.level_kept.to_string(),
            ])?;
        }
        out.flush()
            .map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }
}

/// Negative-to-positive ratio (class 0 over class 1) of each iteration's
/// input rows; `f64::INFINITY` when an iteration has no positives.
pub fn class_balance_trace(report: &TrainReport) -> Result<Vec<f64>> {
    report
        .levels
        .iter()
        .map(|l| {
            if l.class_counts_in.len() != 2 {
                return Err(Error::config("class balance trace needs a binary report"));
            }
            Ok(balance_ratio(l.class_counts_in[0], l.class_counts_in[1]))
        })
        .collect()
}

pub fn balance_ratio(negatives: usize, positives: usize) -> f64 {
    if positives == 0 {
        f64::INFINITY
    } else {
        negatives as f64 / positives as f64
    }
}

/// Out-of-fold accuracy of the configured forest on `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    pub accuracy: f64,
    /// Out-of-fold prediction per row.
    pub oof_predictions: Vec<u32>,
}

impl Validation {
    /// Accuracy restricted to rows where `mask` holds; `None` if none do.
    pub fn subset_accuracy(&self, labels: &[u32], mask: &[bool]) -> Option<f64> {
        let (hit, n) = self
            .oof_predictions
            .iter()
            .zip(labels)
            .zip(mask)
            .filter(|(_, &m)| m)
            .fold((0usize, 0usize), |(h, n), ((p, y), _)| {
                (h + usize::from(p == y), n + 1)
            });
        (n > 0).then(|| hit as f64 / n as f64)
    }
}

/// Stratified k-fold out-of-fold accuracy. Fold assignment and fold forests
/// are seeded from `level_seed`.
pub fn validation_accuracy(d: &Dataset, cfg: &TrainConfig, level_seed: u64) -> Result<Validation> {
    let n = d.n_rows();
    if n < cfg.k_folds {
        return Err(Error::data(format!(
            "{n} rows are too few for {} folds",
            cfg.k_folds
        )));
    }
    let folds = kfold_indices(n, cfg.k_folds, Some(d.labels()), seed::derive(level_seed, FOLD_STREAM))?;
    let fc = cfg.forest_config();
    let mut oof = vec![0u32; n];
    for (k, (train_idx, valid_idx)) in folds.iter().enumerate() {
        let train = d.subset(train_idx);
        let fold_seed = seed::derive(level_seed, FOLD_STREAM + 1 + k as u64);
        let forest = fit_forest(&train, &fc, fold_seed)?;
        let valid = d.subset(valid_idx);
        for (&i, p) in valid_idx.iter().zip(forest.predict_all(&valid)?) {
            oof[i] = p;
        }
    }
    let hits = oof.iter().zip(d.labels()).filter(|(p, y)| p == y).count();
    Ok(Validation {
        accuracy: hits as f64 / n as f64,
        oof_predictions: oof,
    })
}

fn select_route_columns(routes: &LeafMatrix, keep: &[usize]) -> Vec<u32> {
    let mut ids = Vec::with_capacity(routes.n_rows() * keep.len());
    for r in 0..routes.n_rows() {
        let row = routes.row(r);
        ids.extend(keep.iter().map(|&t| row[t]));
    }
    ids
}

pub fn train_cascade(train: &Dataset, cfg: &TrainConfig) -> Result<(CascadeModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let n_classes = train.n_classes();
    let min_hard = cfg.min_hard_rows_for(n_classes);
    let fc = cfg.forest_config();

    let mut d = train.clone();
    let mut levels: Vec<CascadeLevel> = Vec::new();
    let mut reports: Vec<LevelReport> = Vec::new();
    let mut last_discarded: Option<CascadeLevel> = None;
    let mut prev_accuracy: Option<f64> = None;
    let mut decreases = 0;
    let mut stop_reason = StopReason::IterationBudget;

    for iteration in 0..cfg.n_iterations {
        let seed = level_seed(cfg.master_seed, iteration);
        let forest = fit_forest(&d, &fc, seed)?;
        let routes = forest.route_all(&d)?;
        let table = score_table_from_routes(&forest, &routes, d.labels(), cfg.hem_metric)?;

        let (forest, table, mask) = if cfg.evolution_enabled {
            let fitness = tree_fitness(&forest, &table)?;
            let sel = select_survivors(&fitness, cfg.evolution_ratio)?;
            let forest = forest.subset(&sel.survivors)?;
            let table = table.subset(&sel.survivors, cfg.keep_sigma_after_evolution)?;
            let ids = select_route_columns(&routes, &sel.survivors);
            let sigma = table.sigma();
            let mask = ids
                .chunks_exact(sel.survivors.len())
                .map(|leaves| {
                    leaves
                        .iter()
                        .enumerate()
                        .all(|(t, &l)| table.score(t, l) > sigma)
                })
                .collect();
            (forest, table, mask)
        } else {
            let mask = easy_mask(&table, &routes)?;
            (forest, table, mask)
        };

        let (easy, hard) = split_by_mask(&d, &mask);

        let mut validation_accuracy = None;
        let mut easy_validation_accuracy = None;
        if cfg.smart_iteration_enabled && d.n_rows() >= cfg.k_folds {
            let v = crate::cascade::validation_accuracy(&d, cfg, seed)?;
            easy_validation_accuracy = v.subset_accuracy(d.labels(), &mask);
            validation_accuracy = Some(v.accuracy);
        }

        let annul = matches!(
            (validation_accuracy, easy_validation_accuracy),
            (Some(all), Some(easy)) if easy < all
        );
        let mut early_stop = false;
        if let Some(acc) = validation_accuracy {
            if prev_accuracy.is_some_and(|p| acc < p) {
                decreases += 1;
            } else {
                decreases = 0;
            }
            prev_accuracy = Some(acc);
            early_stop = decreases >= cfg.patience;
        }

        let level = CascadeLevel {
            level_index: levels.len(),
            forest,
            score_table: table,
        };
        let keep = !(annul && cfg.discard_annulled_levels);
        let report = LevelReport {
            iteration: iteration + 1,
            n_rows_in: d.n_rows(),
            n_easy: easy.n_rows(),
            n_hard: hard.n_rows(),
            class_counts_in: d.class_counts(),
            class_counts_hard: hard.class_counts(),
            n_trees_kept: level.forest.n_trees(),
            sigma: level.score_table.sigma(),
            validation_accuracy,
            easy_validation_accuracy,
            rule_triggered: if early_stop {
                RuleTriggered::EarlyStop
            } else if annul {
                RuleTriggered::AnnulDivision
            } else {
                RuleTriggered::None
            },
            division_applied: !annul,
            level_kept: keep,
        };
        reports.push(report);
        if keep {
            levels.push(level);
        } else {
            last_discarded = Some(level);
        }

        if early_stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        if !annul {
            let hard_classes = class_counts(hard.labels(), n_classes)
                .iter()
                .filter(|&&c| c > 0)
                .count();
            if hard.n_rows() < min_hard {
                stop_reason = StopReason::HardSetTooSmall;
                break;
            }
            if hard_classes < 2 {
                stop_reason = StopReason::HardSetSingleClass;
                break;
            }
            d = hard;
        }
    }

    if levels.is_empty() {
        // every level was annulled and discarded; keep the last forest so the
        // model can still predict
        let mut level = last_discarded.expect("at least one iteration ran");
        level.level_index = 0;
        if let Some(r) = reports.last_mut() {
            r.level_kept = true;
        }
        levels.push(level);
    }

    let model = CascadeModel {
        levels,
        schema: train.schema().clone(),
        config: cfg.clone(),
    };
    Ok((
        model,
        TrainReport {
            levels: reports,
            stop_reason,
        },
    ))
}
