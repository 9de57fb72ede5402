//! CART classification trees.
//!
//! Trees are stored as a flat node array with the root at index 0 and every
//! child index greater than its parent's. Routing sends a row left when its
//! value is `<=` the node threshold. Thresholds are midpoints between
//! consecutive distinct training values.
//!
//! Split search runs on [`ColumnCodes`]: each feature is replaced by the rank
//! of its value among the feature's distinct values. A node then either
//! histograms codes (few distinct values relative to node size) or sorts
//! `(code, label)` pairs; both visit exactly the same candidate thresholds.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            _ => Err(Error::config(format!("unknown split criterion '{s}'"))),
        }
    }
}

/// Gini (`1 - sum p^2`) or entropy (`-sum p ln p`) of a class-count vector.
pub fn impurity(class_counts: &[u32], criterion: Criterion) -> Result<f64> {
    let n: u64 = class_counts.iter().map(|&c| u64::from(c)).sum();
    if n == 0 {
        return Err(Error::data("impurity of an empty count vector"));
    }
    let n = n as f64;
    Ok(match criterion {
        Criterion::Gini => {
            1.0 - class_counts
                .iter()
                .map(|&c| {
                    let p = f64::from(c) / n;
                    p * p
                })
                .sum::<f64>()
        }
        Criterion::Entropy => -class_counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = f64::from(c) / n;
                p * p.ln()
            })
            .sum::<f64>(),
    })
}

/// Index of the largest count; ties go to the smallest index.
pub fn argmax(counts: &[u32]) -> u32 {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLimits {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        TreeLimits {
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

impl TreeLimits {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf < 1 {
            return Err(Error::config("min_samples_leaf must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split must be >= 2"));
        }
        Ok(())
    }
}

/// `ceil(sqrt(n_features))`, the default per-split feature sample.
pub fn default_feature_subsample(n_features: usize) -> usize {
    ((n_features as f64).sqrt().ceil() as usize).clamp(1, n_features.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Decision {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf_id: u32,
        class_counts: Vec<u32>,
        n_samples: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    n_classes: usize,
    n_features: usize,
    n_leaves: usize,
}

impl DecisionTree {
    /// Assemble and validate a tree from a flat node array.
    pub fn from_nodes(nodes: Vec<TreeNode>, n_classes: usize, n_features: usize) -> Result<Self> {
        let n_leaves = nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count();
        let tree = DecisionTree {
            nodes,
            n_classes,
            n_features,
            n_leaves,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if let TreeNode::Decision { left, right, .. } = node {
                depth[*left as usize] = depth[i] + 1;
                depth[*right as usize] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Node index of the leaf reached by `x`. Width is not checked.
    pub(crate) fn leaf_node(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Decision {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub(crate) fn route_unchecked(&self, x: &[f64]) -> u32 {
        match &self.nodes[self.leaf_node(x)] {
            TreeNode::Leaf { leaf_id, .. } => *leaf_id,
            TreeNode::Decision { .. } => unreachable!(),
        }
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> u32 {
        match &self.nodes[self.leaf_node(x)] {
            TreeNode::Leaf { class_counts, .. } => argmax(class_counts),
            TreeNode::Decision { .. } => unreachable!(),
        }
    }

    /// Leaf id reached by `x`.
    pub fn route(&self, x: &[f64]) -> Result<u32> {
        self.check_width(x)?;
        Ok(self.route_unchecked(x))
    }

    /// Majority class of the leaf reached by `x` (ties to the smallest class).
    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        self.check_width(x)?;
        Ok(self.predict_unchecked(x))
    }

    /// Check the structural invariants: node 0 is the root, children come
    /// after their parent, each non-root node has exactly one parent, leaf
    /// ids are exactly `0..n_leaves`, and leaf counts are consistent.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invariant("tree has no nodes"));
        }
        let n = self.nodes.len();
        let mut parents = vec![0u32; n];
        let mut leaf_seen = vec![false; self.n_leaves];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Decision {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature as usize >= self.n_features {
                        return Err(Error::invariant(format!(
                            "node {i}: feature {feature} out of range"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::invariant(format!("node {i}: non-finite threshold")));
                    }
                    for &child in [left, right] {
                        let c = child as usize;
                        if c <= i || c >= n {
                            return Err(Error::invariant(format!(
                                "node {i}: child index {c} invalid"
                            )));
                        }
                        parents[c] += 1;
                    }
                }
                TreeNode::Leaf {
                    leaf_id,
                    class_counts,
                    n_samples,
                } => {
                    let id = *leaf_id as usize;
                    if id >= self.n_leaves || std::mem::replace(&mut leaf_seen[id], true) {
                        return Err(Error::invariant(format!(
                            "node {i}: leaf id {id} duplicated or out of range"
                        )));
                    }
                    if class_counts.len() != self.n_classes {
                        return Err(Error::invariant(format!(
                            "leaf {id}: {} class counts for {} classes",
                            class_counts.len(),
                            self.n_classes
                        )));
                    }
                    let sum: u64 = class_counts.iter().map(|&c| u64::from(c)).sum();
                    if sum != u64::from(*n_samples) || *n_samples == 0 {
                        return Err(Error::invariant(format!(
                            "leaf {id}: counts sum to {sum}, n_samples = {n_samples}"
                        )));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::invariant("tree nodes do not form a single tree"));
        }
        if leaf_seen.iter().any(|s| !s) {
            return Err(Error::invariant("leaf ids are not contiguous"));
        }
        Ok(())
    }
}

/// Per-feature rank codes of a dataset, shared by all trees of a forest.
#[derive(Clone, Debug)]
pub struct ColumnCodes {
    /// `codes[feature][row]`
    codes: Vec<Vec<u32>>,
    /// `values[feature][code]`, strictly increasing
    values: Vec<Vec<f64>>,
}

impl ColumnCodes {
    pub fn new(d: &Dataset) -> Self {
        let n = d.n_rows();
        let mut codes = Vec::with_capacity(d.n_features());
        let mut values = Vec::with_capacity(d.n_features());
        let mut order: Vec<u32> = (0..n as u32).collect();
        for j in 0..d.n_features() {
            let col: Vec<f64> = d.column(j).collect();
            order.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            let mut code = vec![0u32; n];
            let mut distinct: Vec<f64> = Vec::new();
            for &r in &order {
                let v = col[r as usize];
                if distinct.last() != Some(&v) {
                    distinct.push(v);
                }
                code[r as usize] = (distinct.len() - 1) as u32;
            }
            codes.push(code);
            values.push(distinct);
        }
        ColumnCodes { codes, values }
    }

    pub fn n_features(&self) -> usize {
        self.codes.len()
    }
}

/// Tree hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub limits: TreeLimits,
    pub feature_subsample: usize,
}

/// Fit a tree on the rows `row_idx` of `d` (duplicates allowed).
pub fn fit_tree(
    d: &Dataset,
    row_idx: &[usize],
    criterion: Criterion,
    limits: TreeLimits,
    feature_subsample: usize,
    rng_seed: u64,
) -> Result<DecisionTree> {
    let cols = ColumnCodes::new(d);
    let rows: Vec<u32> = row_idx.iter().map(|&i| i as u32).collect();
    let params = TreeParams {
        criterion,
        limits,
        feature_subsample,
    };
    fit_tree_on_codes(&cols, d.labels(), d.n_classes(), rows, &params, rng_seed)
}

pub(crate) fn fit_tree_on_codes(
    cols: &ColumnCodes,
    labels: &[u32],
    n_classes: usize,
    rows: Vec<u32>,
    params: &TreeParams,
    seed: u64,
) -> Result<DecisionTree> {
    if rows.is_empty() {
        return Err(Error::data("cannot fit a tree on zero rows"));
    }
    let n_features = cols.n_features();
    if params.feature_subsample < 1 || params.feature_subsample > n_features {
        return Err(Error::config(format!(
            "feature_subsample {} not in 1..={n_features}",
            params.feature_subsample
        )));
    }
    params.limits.validate()?;
    let mut grower = Grower::new(cols, labels, n_classes, params, seed, rows.len());
    grower.grow(rows);
    Ok(DecisionTree {
        nodes: grower.nodes,
        n_classes,
        n_features,
        n_leaves: grower.n_leaves as usize,
    })
}

struct Candidate {
    feature: usize,
    /// codes `<= split_code` go left
    split_code: u32,
    next_code: u32,
    proxy: f64,
}

struct Grower<'a> {
    cols: &'a ColumnCodes,
    labels: &'a [u32],
    n_classes: usize,
    params: TreeParams,
    seed: u64,
    nodes: Vec<TreeNode>,
    n_leaves: u32,
    hist: Vec<u32>,
    pairs: Vec<(u32, u32)>,
    left: Vec<u32>,
    sweep_left: Vec<u32>,
    sweep_right: Vec<u32>,
    features: Vec<usize>,
    /// `k ln k` for entropy sweeps
    xlogx: Vec<f64>,
}

impl<'a> Grower<'a> {
    fn new(
        cols: &'a ColumnCodes,
        labels: &'a [u32],
        n_classes: usize,
        params: &TreeParams,
        seed: u64,
        n_rows: usize,
    ) -> Self {
        let max_distinct = cols.values.iter().map(Vec::len).max().unwrap_or(0);
        let xlogx = match params.criterion {
            Criterion::Entropy => (0..=n_rows)
                .map(|k| if k == 0 { 0.0 } else { k as f64 * (k as f64).ln() })
                .collect(),
            Criterion::Gini => Vec::new(),
        };
        Grower {
            cols,
            labels,
            n_classes,
            params: *params,
            seed,
            nodes: Vec::new(),
            n_leaves: 0,
            hist: vec![0; (max_distinct * n_classes).min(16 * n_rows) + n_classes],
            pairs: Vec::new(),
            left: vec![0; n_classes],
            sweep_left: vec![0; n_classes],
            sweep_right: vec![0; n_classes],
            features: (0..cols.n_features()).collect(),
            xlogx,
        }
    }

    fn grow(&mut self, mut rows: Vec<u32>) {
        let placeholder = TreeNode::Leaf {
            leaf_id: 0,
            class_counts: Vec::new(),
            n_samples: 0,
        };
        self.nodes.push(placeholder.clone());
        // (node, start, end, depth); left children are popped first
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        let mut counts = vec![0u32; self.n_classes];
        while let Some((node, start, end, depth)) = stack.pop() {
            let slice = &mut rows[start..end];
            counts.iter_mut().for_each(|c| *c = 0);
            for &r in slice.iter() {
                counts[self.labels[r as usize] as usize] += 1;
            }
            let split = if self.is_terminal(&counts, slice.len(), depth) {
                None
            } else {
                self.best_split(node, slice, &counts)
            };
            let accepted = split.and_then(|cand| {
                let n_left = self.partition(slice, &cand, &counts)?;
                Some((cand, n_left))
            });
            match accepted {
                Some((cand, n_left)) => {
                    let left = self.nodes.len();
                    self.nodes.push(placeholder.clone());
                    self.nodes.push(placeholder.clone());
                    let vals = &self.cols.values[cand.feature];
                    self.nodes[node] = TreeNode::Decision {
                        feature: cand.feature as u32,
                        threshold: midpoint(
                            vals[cand.split_code as usize],
                            vals[cand.next_code as usize],
                        ),
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    stack.push((left + 1, start + n_left, end, depth + 1));
                    stack.push((left, start, start + n_left, depth + 1));
                }
                None => {
                    self.nodes[node] = TreeNode::Leaf {
                        leaf_id: self.n_leaves,
                        class_counts: counts.clone(),
                        n_samples: (end - start) as u32,
                    };
                    self.n_leaves += 1;
                }
            }
        }
    }

    fn is_terminal(&self, counts: &[u32], n: usize, depth: usize) -> bool {
        let limits = &self.params.limits;
        counts.iter().filter(|&&c| c > 0).count() <= 1
            || n < limits.min_samples_split
            || n < 2 * limits.min_samples_leaf
            || limits.max_depth.is_some_and(|d| depth >= d)
    }

    /// Reorder `rows` so the left side comes first and return its size, or
    /// `None` when the split leaves class proportions unchanged (zero gain).
    fn partition(&mut self, rows: &mut [u32], cand: &Candidate, total: &[u32]) -> Option<usize> {
        let codes = &self.cols.codes[cand.feature];
        let mut i = 0;
        let mut j = rows.len();
        while i < j {
            if codes[rows[i] as usize] <= cand.split_code {
                i += 1;
            } else {
                j -= 1;
                rows.swap(i, j);
            }
        }
        let n_left = i;
        let n = rows.len() as u64;
        self.left.iter_mut().for_each(|c| *c = 0);
        for &r in &rows[..n_left] {
            self.left[self.labels[r as usize] as usize] += 1;
        }
        let gains = self
            .left
            .iter()
            .zip(total)
            .any(|(&l, &t)| u64::from(l) * n != u64::from(t) * n_left as u64);
        gains.then_some(n_left)
    }

    fn best_split(&mut self, node: usize, rows: &[u32], total: &[u32]) -> Option<Candidate> {
        let mut rng = seed::rng(seed::derive(self.seed, node as u64));
        let n_features = self.features.len();
        self.features.sort_unstable();
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for i in 0..n_features {
            let j = rng.random_range(i..n_features);
            self.features.swap(i, j);
            let f = self.features[i];
            if self.scan_feature(f, rows, total, &mut best) {
                visited += 1;
                if visited == self.params.feature_subsample {
                    break;
                }
            }
        }
        best
    }

    /// Sweep all thresholds of feature `f`; returns false when the feature is
    /// constant within the node.
    fn scan_feature(
        &mut self,
        f: usize,
        rows: &[u32],
        total: &[u32],
        best: &mut Option<Candidate>,
    ) -> bool {
        let codes = &self.cols.codes[f];
        let n_distinct = self.cols.values[f].len();
        let c = self.n_classes;
        let mut sweep = Sweep::new(
            total,
            rows.len(),
            self.params.criterion,
            self.params.limits.min_samples_leaf,
            &self.xlogx,
            &mut self.sweep_left,
            &mut self.sweep_right,
        );
        // a histogram pass costs about two visits per (code, class) cell
        if n_distinct * c <= 16 * rows.len() {
            let hist = &mut self.hist[..n_distinct * c];
            hist.iter_mut().for_each(|h| *h = 0);
            for &r in rows {
                hist[codes[r as usize] as usize * c + self.labels[r as usize] as usize] += 1;
            }
            let mut prev: Option<u32> = None;
            for code in 0..n_distinct {
                let bucket = &hist[code * c..(code + 1) * c];
                if bucket.iter().all(|&h| h == 0) {
                    continue;
                }
                if let Some(p) = prev {
                    sweep.offer(f, p, code as u32, best);
                }
                for (class, &h) in bucket.iter().enumerate() {
                    if h > 0 {
                        sweep.move_left(class, h);
                    }
                }
                prev = Some(code as u32);
            }
            sweep.n_boundaries > 0
        } else {
            let pairs = &mut self.pairs;
            pairs.clear();
            pairs.extend(
                rows.iter()
                    .map(|&r| (codes[r as usize], self.labels[r as usize])),
            );
            pairs.sort_unstable();
            let mut k = 0;
            while k < pairs.len() {
                let code = pairs[k].0;
                if k > 0 {
                    sweep.offer(f, pairs[k - 1].0, code, best);
                }
                while k < pairs.len() && pairs[k].0 == code {
                    let class = pairs[k].1;
                    let mut m = 0;
                    while k < pairs.len() && pairs[k] == (code, class) {
                        m += 1;
                        k += 1;
                    }
                    sweep.move_left(class as usize, m);
                }
            }
            sweep.n_boundaries > 0
        }
    }
}

/// Incremental left/right class statistics while moving rows left in code order.
struct Sweep<'g> {
    criterion: Criterion,
    min_leaf: usize,
    n: usize,
    n_left: usize,
    left: &'g mut [u32],
    right: &'g mut [u32],
    // gini: sum of squared counts; entropy: sum of k ln k
    left_acc: f64,
    right_acc: f64,
    left_sq: u64,
    right_sq: u64,
    xlogx: &'g [f64],
    n_boundaries: usize,
}

impl<'g> Sweep<'g> {
    fn new(
        total: &[u32],
        n: usize,
        criterion: Criterion,
        min_leaf: usize,
        xlogx: &'g [f64],
        left: &'g mut [u32],
        right: &'g mut [u32],
    ) -> Self {
        left.fill(0);
        right.copy_from_slice(total);
        Sweep {
            criterion,
            min_leaf,
            n,
            n_left: 0,
            left,
            right,
            left_acc: 0.0,
            right_acc: match criterion {
                Criterion::Entropy => total.iter().map(|&t| xlogx[t as usize]).sum(),
                Criterion::Gini => 0.0,
            },
            left_sq: 0,
            right_sq: total.iter().map(|&t| u64::from(t) * u64::from(t)).sum(),
            xlogx,
            n_boundaries: 0,
        }
    }

    fn move_left(&mut self, class: usize, m: u32) {
        let l = u64::from(self.left[class]);
        let r = u64::from(self.right[class]);
        let m64 = u64::from(m);
        match self.criterion {
            Criterion::Gini => {
                self.left_sq += (l + m64) * (l + m64) - l * l;
                self.right_sq -= r * r - (r - m64) * (r - m64);
            }
            Criterion::Entropy => {
                self.left_acc += self.xlogx[(l + m64) as usize] - self.xlogx[l as usize];
                self.right_acc += self.xlogx[(r - m64) as usize] - self.xlogx[r as usize];
            }
        }
        self.left[class] += m;
        self.right[class] -= m;
        self.n_left += m as usize;
    }

    /// Consider splitting between `code` (last code moved left) and `next`.
    fn offer(&mut self, feature: usize, code: u32, next: u32, best: &mut Option<Candidate>) {
        self.n_boundaries += 1;
        let nl = self.n_left;
        let nr = self.n - nl;
        if nl < self.min_leaf || nr < self.min_leaf {
            return;
        }
        // larger is better; equals -(n_l * imp_l + n_r * imp_r) up to a
        // node-constant offset
        let proxy = match self.criterion {
            Criterion::Gini => self.left_sq as f64 / nl as f64 + self.right_sq as f64 / nr as f64,
            Criterion::Entropy => {
                self.left_acc - self.xlogx[nl] + self.right_acc - self.xlogx[nr]
            }
        };
        if best.as_ref().is_none_or(|b| proxy > b.proxy) {
            *best = Some(Candidate {
                feature,
                split_code: code,
                next_code: next,
                proxy,
            });
        }
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * lo + 0.5 * hi;
    // adjacent floats can round up onto `hi`
    if mid >= hi {
        lo
    } else {
        mid
    }
}
