//! Tree elimination by fitness.
//!
//! A tree's fitness is the mean score of its leaves. The lowest-scoring
//! `floor(ratio * n_trees)` trees are dropped before easy/hard voting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::hem::LeafScoreTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub fitness: Vec<f64>,
    /// Minimum surviving fitness.
    pub threshold: f64,
    pub survivors: Vec<usize>,
    pub eliminated: Vec<usize>,
}

/// Mean leaf score of each tree.
pub fn tree_fitness(f: &Forest, table: &LeafScoreTable) -> Result<Vec<f64>> {
    if table.scores().len() != f.n_trees() {
        return Err(Error::invariant(format!(
            "score table has {} trees, forest has {}",
            table.scores().len(),
            f.n_trees()
        )));
    }
    table
        .scores()
        .iter()
        .enumerate()
        .map(|(t, leaves)| {
            if leaves.is_empty() {
                return Err(Error::invariant(format!("tree {t} has no score entries")));
            }
            Ok(leaves.iter().sum::<f64>() / leaves.len() as f64)
        })
        .collect()
}

/// Number of trees eliminated at `ratio`, keeping at least one.
pub fn n_eliminated(n_trees: usize, ratio: f64) -> usize {
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    let k = (ratio * n_trees as f64 + 1e-9).floor() as usize;
    k.min(n_trees.saturating_sub(1))
}

/// Drop the lowest-fitness trees. Among equal fitness the larger index goes
/// first.
pub fn select_survivors(fitness: &[f64], ratio: f64) -> Result<FitnessReport> {
    if fitness.is_empty() {
        return Err(Error::config("no trees to select from"));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("evolution ratio {ratio} not in [0, 1)")));
    }
    let k = n_eliminated(fitness.len(), ratio);
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)));
    let mut eliminated = order[..k].to_vec();
    let mut survivors = order[k..].to_vec();
    eliminated.sort_unstable();
    survivors.sort_unstable();
    let threshold = survivors
        .iter()
        .map(|&t| fitness[t])
        .min_by(f64::total_cmp)
        .expect("at least one survivor");
    Ok(FitnessReport {
        fitness: fitness.to_vec(),
        threshold,
        survivors,
        eliminated,
    })
}
