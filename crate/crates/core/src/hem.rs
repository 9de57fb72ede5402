//! Hard-example mining.
//!
//! Each leaf is read as a rule "path conditions => majority class" and scored
//! against the rows routed to it. The threshold `sigma` is the mean score over
//! all leaves of all trees. A row is easy when, in every tree, its leaf
//! scores strictly above `sigma`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, LeafMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Supp,
    Conf,
    #[default]
    F1,
    Gini,
    Entropy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Supp,
        Metric::Conf,
        Metric::F1,
        Metric::Gini,
        Metric::Entropy,
    ];

    /// Score given to leaves no row reaches.
    pub fn minimum(self, n_classes: usize) -> f64 {
        match self {
            Metric::Supp | Metric::Conf | Metric::F1 => 0.0,
            Metric::Gini => 1.0 / n_classes as f64 - 1.0,
            Metric::Entropy => -(n_classes as f64).ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Supp => "supp",
            Metric::Conf => "conf",
            Metric::F1 => "f1",
            Metric::Gini => "gini",
            Metric::Entropy => "entropy",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown leaf metric '{s}'")))
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Rows of one level's training set that reach one leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafStats {
    pub tree_index: usize,
    pub leaf_id: usize,
    pub candidate_count: usize,
    pub majority_count: usize,
    pub class_counts: Vec<usize>,
    pub total_rows: usize,
}

impl LeafStats {
    pub fn from_counts(
        tree_index: usize,
        leaf_id: usize,
        class_counts: Vec<usize>,
        total_rows: usize,
    ) -> Self {
        LeafStats {
            tree_index,
            leaf_id,
            candidate_count: class_counts.iter().sum(),
            majority_count: class_counts.iter().copied().max().unwrap_or(0),
            class_counts,
            total_rows,
        }
    }
}

pub fn score_leaf(stats: &LeafStats, metric: Metric) -> Result<f64> {
    let c = stats.candidate_count;
    if c == 0 {
        return Err(Error::data(format!(
            "leaf {} of tree {} has no candidate rows",
            stats.leaf_id, stats.tree_index
        )));
    }
    if stats.total_rows == 0 {
        return Err(Error::data("leaf score with zero total rows"));
    }
    let c = c as f64;
    let supp = c / stats.total_rows as f64;
    let conf = stats.majority_count as f64 / c;
    Ok(match metric {
        Metric::Supp => supp,
        Metric::Conf => conf,
        Metric::F1 => {
            if supp + conf == 0.0 {
                0.0
            } else {
                2.0 * supp * conf / (supp + conf)
            }
        }
        Metric::Gini => {
            stats
                .class_counts
                .iter()
                .map(|&k| {
                    let p = k as f64 / c;
                    p * p
                })
                .sum::<f64>()
                - 1.0
        }
        Metric::Entropy => stats
            .class_counts
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| {
                let p = k as f64 / c;
                p * p.ln()
            })
            .sum(),
    })
}

/// Scores of every leaf of every tree in a forest, plus the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafScoreTable {
    metric: Metric,
    /// `scores[tree][leaf_id]`
    scores: Vec<Vec<f64>>,
    sigma: f64,
}

impl LeafScoreTable {
    /// Table with sigma set to the mean of `scores`.
    pub fn new(metric: Metric, scores: Vec<Vec<f64>>) -> Result<Self> {
        let sigma = mean_score(&scores)?;
        Ok(LeafScoreTable {
            metric,
            scores,
            sigma,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn score(&self, tree: usize, leaf: u32) -> f64 {
        self.scores[tree][leaf as usize]
    }

    pub fn n_entries(&self) -> usize {
        self.scores.iter().map(Vec::len).sum()
    }

    /// Mean of all stored scores.
    pub fn mean(&self) -> f64 {
        mean_score(&self.scores).unwrap_or(f64::NAN)
    }

    /// Same scores with a different threshold.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Rows for the trees at `indices`; sigma is recomputed over them unless
    /// `keep_sigma` is set.
    pub fn subset(&self, indices: &[usize], keep_sigma: bool) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.scores.len()) {
            return Err(Error::invariant(format!("tree index {bad} out of range")));
        }
        let scores: Vec<Vec<f64>> = indices.iter().map(|&i| self.scores[i].clone()).collect();
        let table = LeafScoreTable::new(self.metric, scores)?;
        Ok(if keep_sigma {
            table.with_sigma(self.sigma)
        } else {
            table
        })
    }

    /// Check that the table has exactly one finite entry per leaf of `f`.
    pub fn check_coverage(&self, f: &Forest) -> Result<()> {
        if self.scores.len() != f.n_trees() {
            return Err(Error::invariant(format!(
                "score table has {} trees, forest has {}",
                self.scores.len(),
                f.n_trees()
            )));
        }
        for (t, (row, tree)) in self.scores.iter().zip(f.trees()).enumerate() {
            if row.len() != tree.n_leaves() {
                let missing = row.len().min(tree.n_leaves());
                return Err(Error::invariant(format!(
                    "score table tree {t}: {} entries for {} leaves (leaf {missing} unmatched)",
                    row.len(),
                    tree.n_leaves()
                )));
            }
            if let Some(l) = row.iter().position(|s| !s.is_finite()) {
                return Err(Error::invariant(format!(
                    "score table tree {t} leaf {l}: non-finite score"
                )));
            }
        }
        if !self.sigma.is_finite() {
            return Err(Error::invariant("sigma is not finite"));
        }
        Ok(())
    }

    /// Whether a row landing in `leaves` (one per tree) is easy.
    pub fn is_easy(&self, leaves: &[u32]) -> bool {
        leaves
            .iter()
            .enumerate()
            .all(|(t, &l)| self.score(t, l) > self.sigma)
    }
}

fn mean_score(scores: &[Vec<f64>]) -> Result<f64> {
    let n: usize = scores.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::invariant("score table is empty"));
    }
    Ok(scores.iter().flatten().sum::<f64>() / n as f64)
}

/// Per-leaf class counts of the rows in `routes` (labels indexed by row).
pub fn leaf_stats(f: &Forest, routes: &LeafMatrix, labels: &[u32]) -> Vec<Vec<LeafStats>> {
    let c = f.n_classes();
    let n = routes.n_rows();
    (0..f.n_trees())
        .into_par_iter()
        .map(|t| {
            let n_leaves = f.trees()[t].n_leaves();
            let mut counts = vec![0usize; n_leaves * c];
            for (r, &y) in labels.iter().enumerate().take(n) {
                counts[routes.get(r, t) as usize * c + y as usize] += 1;
            }
            counts
                .chunks_exact(c)
                .enumerate()
                .map(|(l, cc)| LeafStats::from_counts(t, l, cc.to_vec(), n))
                .collect()
        })
        .collect()
}

/// Score table from precomputed routes.
pub fn score_table_from_routes(
    f: &Forest,
    routes: &LeafMatrix,
    labels: &[u32],
    metric: Metric,
) -> Result<LeafScoreTable> {
    if routes.n_rows() == 0 {
        return Err(Error::data("cannot score leaves on an empty dataset"));
    }
    if routes.n_trees() != f.n_trees() || labels.len() != routes.n_rows() {
        return Err(Error::invariant("leaf routes do not match forest and labels"));
    }
    let min = metric.minimum(f.n_classes());
    let scores = leaf_stats(f, routes, labels)
        .iter()
        .map(|tree| {
            tree.iter()
                .map(|s| {
                    if s.candidate_count == 0 {
                        Ok(min)
                    } else {
                        score_leaf(s, metric)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    LeafScoreTable::new(metric, scores)
}

/// Score every leaf of `f` on `d`. Leaves reached by no row get the metric's
/// minimum value.
pub fn build_score_table(f: &Forest, d: &Dataset, metric: Metric) -> Result<LeafScoreTable> {
    if d.is_empty() {
        return Err(Error::data("cannot score leaves on an empty dataset"));
    }
    let routes = f.route_all(d)?;
    score_table_from_routes(f, &routes, d.labels(), metric)
}

/// `mask[r]` is true when row `r` of `routes` is easy.
pub fn easy_mask(table: &LeafScoreTable, routes: &LeafMatrix) -> Result<Vec<bool>> {
    if routes.n_trees() != table.scores().len() {
        return Err(Error::invariant(format!(
            "score table has {} trees, routes have {}",
            table.scores().len(),
            routes.n_trees()
        )));
    }
    Ok((0..routes.n_rows())
        .map(|r| table.is_easy(routes.row(r)))
        .collect())
}

/// Split `d` into (easy, hard), both in input order.
pub fn partition_easy_hard(
    f: &Forest,
    table: &LeafScoreTable,
    d: &Dataset,
) -> Result<(Dataset, Dataset)> {
    table.check_coverage(f)?;
    let routes = f.route_all(d)?;
    let mask = easy_mask(table, &routes)?;
    Ok(split_by_mask(d, &mask))
}

pub(crate) fn split_by_mask(d: &Dataset, mask: &[bool]) -> (Dataset, Dataset) {
    let (easy, hard): (Vec<usize>, Vec<usize>) = (0..d.n_rows()).partition(|&r| mask[r]);
    (d.subset(&easy), d.subset(&hard))
}
