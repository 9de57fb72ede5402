//! Bagged random forests.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;
use crate::tree::{
    argmax, default_feature_subsample, fit_tree_on_codes, ColumnCodes, Criterion, DecisionTree,
    TreeLimits, TreeParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub criterion: Criterion,
    pub limits: TreeLimits,
    /// Features tried per split; `None` means `ceil(sqrt(n_features))`.
    pub feature_subsample: Option<usize>,
    /// When false every tree sees the full dataset once (used by exact
    /// small-instance tests).
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            criterion: Criterion::Gini,
            limits: TreeLimits::default(),
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::config("n_trees must be >= 1"));
        }
        if self.feature_subsample == Some(0) {
            return Err(Error::config("feature_subsample must be >= 1"));
        }
        self.limits.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<DecisionTree>,
    tree_seeds: Vec<u64>,
    n_classes: usize,
    n_features: usize,
    config: ForestConfig,
}

/// Leaf ids for every (row, tree) pair, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafMatrix {
    n_rows: usize,
    n_trees: usize,
    ids: Vec<u32>,
}

impl LeafMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn get(&self, row: usize, tree: usize) -> u32 {
        self.ids[row * self.n_trees + tree]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.ids[row * self.n_trees..(row + 1) * self.n_trees]
    }
}

/// Seed of tree `i` under `master_seed`.
pub fn tree_seed(master_seed: u64, i: usize) -> u64 {
    seed::derive(master_seed, i as u64)
}

/// Fit `config.n_trees` trees in parallel. Tree `i` depends only on the data
/// and `tree_seed(master_seed, i)`.
pub fn fit_forest(d: &Dataset, config: &ForestConfig, master_seed: u64) -> Result<Forest> {
    config.validate()?;
    if d.is_empty() {
        return Err(Error::data("cannot fit a forest on an empty dataset"));
    }
    let n_features = d.n_features();
    let feature_subsample = config
        .feature_subsample
        .unwrap_or_else(|| default_feature_subsample(n_features));
    if feature_subsample > n_features {
        return Err(Error::config(format!(
            "feature_subsample {feature_subsample} exceeds {n_features} features"
        )));
    }
    let params = TreeParams {
        criterion: config.criterion,
        limits: config.limits,
        feature_subsample,
    };
    let cols = ColumnCodes::new(d);
    let n = d.n_rows();
    let tree_seeds: Vec<u64> = (0..config.n_trees).map(|i| tree_seed(master_seed, i)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&ts| {
            let rows: Vec<u32> = if config.bootstrap {
                let mut rng = seed::rng(seed::derive(ts, 0));
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            fit_tree_on_codes(
                &cols,
                d.labels(),
                d.n_classes(),
                rows,
                &params,
                seed::derive(ts, 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        tree_seeds,
        n_classes: d.n_classes(),
        n_features,
        config: *config,
    })
}

impl Forest {
    /// Assemble a forest from already-built trees.
    pub fn from_trees(
        trees: Vec<DecisionTree>,
        tree_seeds: Vec<u64>,
        config: ForestConfig,
    ) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::invariant("forest has no trees"))?;
        let forest = Forest {
            n_classes: first.n_classes(),
            n_features: first.n_features(),
            trees,
            tree_seeds,
            config,
        };
        forest.validate()?;
        Ok(forest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::invariant("forest has no trees"));
        }
        if self.tree_seeds.len() != self.trees.len() {
            return Err(Error::invariant(format!(
                "{} tree seeds for {} trees",
                self.tree_seeds.len(),
                self.trees.len()
            )));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if t.n_classes() != self.n_classes || t.n_features() != self.n_features {
                return Err(Error::invariant(format!(
                    "tree {i} has shape ({}, {}), forest expects ({}, {})",
                    t.n_classes(),
                    t.n_features(),
                    self.n_classes,
                    self.n_features
                )));
            }
            t.validate()
                .map_err(|e| Error::invariant(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub(crate) fn check_width(&self, width: usize) -> Result<()> {
        if width != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                got: width,
            });
        }
        Ok(())
    }

    pub(crate) fn vote_counts_unchecked(&self, x: &[f64]) -> Vec<u32> {
        let mut votes = vec![0u32; self.n_classes];
        for t in &self.trees {
            votes[t.predict_unchecked(x) as usize] += 1;
        }
        votes
    }

    /// Number of trees voting for each class.
    pub fn vote_counts(&self, x: &[f64]) -> Result<Vec<u32>> {
        self.check_width(x.len())?;
        Ok(self.vote_counts_unchecked(x))
    }

    /// Plurality vote; ties go to the smallest class index.
    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        Ok(argmax(&self.vote_counts(x)?))
    }

    pub fn predict_all(&self, d: &Dataset) -> Result<Vec<u32>> {
        self.check_width(d.n_features())?;
        Ok(d
            .features()
            .par_chunks(self.n_features.max(1))
            .map(|x| argmax(&self.vote_counts_unchecked(x)))
            .collect())
    }

    /// Leaf reached by every row in every tree.
    pub fn route_all(&self, d: &Dataset) -> Result<LeafMatrix> {
        self.check_width(d.n_features())?;
        let n_trees = self.trees.len();
        let mut ids = vec![0u32; d.n_rows() * n_trees];
        ids.par_chunks_mut(n_trees)
            .zip(d.features().par_chunks(self.n_features.max(1)))
            .for_each(|(out, x)| {
                for (o, t) in out.iter_mut().zip(&self.trees) {
                    *o = t.route_unchecked(x);
                }
            });
        Ok(LeafMatrix {
            n_rows: d.n_rows(),
            n_trees,
            ids,
        })
    }

    /// Forest restricted to the trees at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Forest> {
        if indices.is_empty() {
            return Err(Error::invariant("forest subset has no trees"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.trees.len()) {
            return Err(Error::invariant(format!("tree index {bad} out of range")));
        }
        Ok(Forest {
            trees: indices.iter().map(|&i| self.trees[i].clone()).collect(),
            tree_seeds: indices.iter().map(|&i| self.tree_seeds[i]).collect(),
            n_classes: self.n_classes,
            n_features: self.n_features,
            config: self.config,
        })
    }
}

/// Plurality vote of `f` for `x`.
pub fn predict_forest(f: &Forest, x: &[f64]) -> Result<u32> {
    f.predict(x)
}
