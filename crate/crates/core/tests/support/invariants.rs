//! Property checks shared by the core property tests and the acceptance
//! target. Each check returns a `TestCaseError` on failure so it can run
//! under `proptest!` or a hand-driven `TestRunner`.

#![allow(dead_code)]

use dbrf::cascade::{predict_cascade, train_cascade, TrainConfig};
use dbrf::data::Dataset;
use dbrf::evolve::select_survivors;
use dbrf::forest::{fit_forest, ForestConfig};
use dbrf::hem::{build_score_table, easy_mask, score_leaf, LeafStats, Metric};
use dbrf::metrics::{accuracy, auc_roc, confusion};
use dbrf::synthetic;
use dbrf::tree::{fit_tree, impurity, Criterion, DecisionTree, TreeLimits, TreeNode};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type CheckResult = Result<(), TestCaseError>;

/// Parameters of a small random dataset with tied integer features.
#[derive(Clone, Debug)]
pub struct SmallData {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub levels: u32,
    pub seed: u64,
}

impl SmallData {
    pub fn build(&self) -> Dataset {
        synthetic::random_small(self.n_rows, self.n_features, self.n_classes, self.levels, self.seed)
    }
}

pub fn small_data(max_rows: usize, max_features: usize, max_classes: usize) -> impl Strategy<Value = SmallData> {
    (6..=max_rows, 1..=max_features, 2..=max_classes, 2u32..8, any::<u64>()).prop_map(
        |(n_rows, n_features, n_classes, levels, seed)| SmallData {
            n_rows,
            n_features,
            n_classes,
            levels,
            seed,
        },
    )
}

pub fn metric() -> impl Strategy<Value = Metric> {
    prop::sample::select(Metric::ALL.to_vec())
}

pub fn criterion() -> impl Strategy<Value = Criterion> {
    prop::sample::select(vec![Criterion::Gini, Criterion::Entropy])
}

fn small_forest_config(n_trees: usize) -> ForestConfig {
    ForestConfig {
        n_trees,
        ..ForestConfig::default()
    }
}

fn small_train_config(seed: u64, metric: Metric) -> TrainConfig {
    TrainConfig {
        n_iterations: 3,
        n_trees: 6,
        hem_metric: metric,
        k_folds: 3,
        patience: 1,
        master_seed: seed,
        ..TrainConfig::default()
    }
}

fn weighted_impurity(labels: &[u32], rows: &[usize], n_classes: usize, criterion: Criterion) -> f64 {
    let mut counts = vec![0u32; n_classes];
    for &r in rows {
        counts[labels[r] as usize] += 1;
    }
    rows.len() as f64 * impurity(&counts, criterion).unwrap()
}

/// Nodes visited by `x`, root first.
pub fn path(tree: &DecisionTree, x: &[f64]) -> Vec<usize> {
    let mut out = vec![0];
    let mut i = 0;
    while let TreeNode::Decision {
        feature,
        threshold,
        left,
        right,
    } = &tree.nodes()[i]
    {
        i = if x[*feature as usize] <= *threshold {
            *left as usize
        } else {
            *right as usize
        };
        out.push(i);
    }
    out
}

/// Rows reaching each node when training rows are routed.
fn rows_per_node(tree: &DecisionTree, d: &Dataset) -> Vec<Vec<usize>> {
    let mut per = vec![Vec::new(); tree.nodes().len()];
    for r in 0..d.n_rows() {
        for n in path(tree, d.row(r)) {
            per[n].push(r);
        }
    }
    per
}

/// The root split of a tree grown on all rows with every feature considered
/// achieves the minimum weighted child impurity over all candidate splits.
pub fn check_root_split_oracle(data: &SmallData, criterion: Criterion) -> CheckResult {
    let d = data.build();
    let rows: Vec<usize> = (0..d.n_rows()).collect();
    let tree = fit_tree(&d, &rows, criterion, TreeLimits::default(), d.n_features(), data.seed).unwrap();
    let labels = d.labels();
    let c = d.n_classes();
    let parent = weighted_impurity(labels, &rows, c, criterion);
    let mut best = f64::INFINITY;
    for j in 0..d.n_features() {
        let mut vals: Vec<f64> = d.column(j).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| d.row(i)[j] <= t);
            let imp = weighted_impurity(labels, &l, c, criterion) + weighted_impurity(labels, &r, c, criterion);
            best = best.min(imp);
        }
    }
    match &tree.nodes()[0] {
        TreeNode::Decision { feature, threshold, .. } => {
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| d.row(i)[*feature as usize] <= *threshold);
            let chosen = weighted_impurity(labels, &l, c, criterion) + weighted_impurity(labels, &r, c, criterion);
            prop_assert!(
                (chosen - best).abs() <= 1e-9 * parent.max(1.0),
                "chosen {chosen} vs best {best}"
            );
            // the threshold lies strictly between two training values
            let vals: Vec<f64> = d.column(*feature as usize).collect();
            prop_assert!(vals.iter().any(|&v| v <= *threshold));
            prop_assert!(vals.iter().any(|&v| v > *threshold));
        }
        TreeNode::Leaf { .. } => {
            // no split improves on the parent
            prop_assert!(best >= parent - 1e-9 * parent.max(1.0), "best {best} < parent {parent}");
        }
    }
    Ok(())
}

/// Every decision node strictly lowers weighted impurity on the rows that
/// reach it, and leaf counts equal the routed training rows.
pub fn check_impurity_decrease_and_routing(data: &SmallData, criterion: Criterion, subsample: usize) -> CheckResult {
    let d = data.build();
    let rows: Vec<usize> = (0..d.n_rows()).collect();
    let k = subsample.clamp(1, d.n_features());
    let tree = fit_tree(&d, &rows, criterion, TreeLimits::default(), k, data.seed).unwrap();
    tree.validate().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let per = rows_per_node(&tree, &d);
    let labels = d.labels();
    let c = d.n_classes();
    for (i, node) in tree.nodes().iter().enumerate() {
        match node {
            TreeNode::Decision { left, right, .. } => {
                let parent = weighted_impurity(labels, &per[i], c, criterion);
                let children = weighted_impurity(labels, &per[*left as usize], c, criterion)
                    + weighted_impurity(labels, &per[*right as usize], c, criterion);
                prop_assert!(children < parent, "node {i}: {children} >= {parent}");
                prop_assert!(!per[*left as usize].is_empty() && !per[*right as usize].is_empty());
            }
            TreeNode::Leaf {
                leaf_id,
                class_counts,
                n_samples,
            } => {
                prop_assert!((*leaf_id as usize) < tree.n_leaves());
                prop_assert_eq!(*n_samples as usize, per[i].len());
                let mut routed = vec![0u32; c];
                for &r in &per[i] {
                    routed[labels[r] as usize] += 1;
                }
                prop_assert_eq!(&routed, class_counts);
            }
        }
    }
    Ok(())
}

/// Forest output gets at least as many votes as any other class, and the
/// tie rule picks the smallest index.
pub fn check_vote_identity(data: &SmallData) -> CheckResult {
    let d = data.build();
    let f = fit_forest(&d, &small_forest_config(7), data.seed).unwrap();
    for x in d.rows() {
        let votes = f.vote_counts(x).unwrap();
        let p = f.predict(x).unwrap() as usize;
        prop_assert!(votes.iter().all(|&v| v <= votes[p]));
        prop_assert!(votes[..p].iter().all(|&v| v < votes[p]));
        prop_assert_eq!(votes.iter().sum::<u32>() as usize, f.n_trees());
    }
    Ok(())
}

/// Easy and hard sides partition the rows, keep input order, and agree with a
/// direct per-row, per-tree check.
pub fn check_partition_exactness(data: &SmallData, metric: Metric) -> CheckResult {
    let d = data.build();
    let f = fit_forest(&d, &small_forest_config(5), data.seed).unwrap();
    let table = build_score_table(&f, &d, metric).unwrap();
    let (easy, hard) = dbrf::hem::partition_easy_hard(&f, &table, &d).unwrap();
    prop_assert_eq!(easy.n_rows() + hard.n_rows(), d.n_rows());
    let mut ids: Vec<u64> = easy.row_ids().iter().chain(hard.row_ids()).copied().collect();
    prop_assert!(easy.row_ids().windows(2).all(|w| w[0] < w[1]));
    prop_assert!(hard.row_ids().windows(2).all(|w| w[0] < w[1]));
    ids.sort_unstable();
    prop_assert_eq!(ids, d.row_ids().to_vec());
    for r in 0..d.n_rows() {
        let brute = f
            .trees()
            .iter()
            .enumerate()
            .all(|(t, tree)| table.score(t, tree.route(d.row(r)).unwrap()) > table.sigma());
        prop_assert_eq!(brute, easy.row_ids().contains(&d.row_ids()[r]));
    }
    Ok(())
}

/// Raising sigma never turns a hard row easy; dropping a tree never turns an
/// easy row hard.
pub fn check_easy_set_monotonicity(data: &SmallData, metric: Metric, bump: f64) -> CheckResult {
    let d = data.build();
    let f = fit_forest(&d, &small_forest_config(4), data.seed).unwrap();
    let table = build_score_table(&f, &d, metric).unwrap();
    let routes = f.route_all(&d).unwrap();
    let base = easy_mask(&table, &routes).unwrap();
    let raised = easy_mask(&table.clone().with_sigma(table.sigma() + bump.abs()), &routes).unwrap();
    for (b, r) in base.iter().zip(&raised) {
        prop_assert!(!r || *b, "raising sigma made a row easy");
    }
    let keep: Vec<usize> = (1..f.n_trees()).collect();
    let fewer = f.subset(&keep).unwrap();
    let fewer_table = table.subset(&keep, true).unwrap();
    let fewer_mask = easy_mask(&fewer_table, &fewer.route_all(&d).unwrap()).unwrap();
    for (b, s) in base.iter().zip(&fewer_mask) {
        prop_assert!(!b || *s, "removing a tree made a row hard");
    }
    Ok(())
}

pub fn leaf_stats() -> impl Strategy<Value = LeafStats> {
    (prop::collection::vec(0usize..50, 2..6), 0usize..100)
        .prop_filter("non-empty leaf", |(c, _)| c.iter().sum::<usize>() > 0)
        .prop_map(|(counts, extra)| {
            let total = counts.iter().sum::<usize>() + extra;
            LeafStats::from_counts(0, 0, counts, total)
        })
}

/// Score ranges per metric; pure leaves reach the maximum 0 for gini and
/// entropy.
pub fn check_score_ranges(s: &LeafStats) -> CheckResult {
    let c = s.class_counts.len() as f64;
    let eps = 1e-12;
    for m in Metric::ALL {
        let v = score_leaf(s, m).unwrap();
        let ok = match m {
            Metric::F1 => (0.0..=1.0).contains(&v),
            Metric::Conf | Metric::Supp => v > 0.0 && v <= 1.0,
            Metric::Gini => v >= 1.0 / c - 1.0 - eps && v <= eps,
            Metric::Entropy => v >= -c.ln() - eps && v <= eps,
        };
        prop_assert!(ok, "{m}: {v} out of range for {s:?}");
        prop_assert!(v >= m.minimum(s.class_counts.len()) - eps);
    }
    let pure = s.class_counts.iter().filter(|&&k| k > 0).count() == 1;
    if pure {
        prop_assert_eq!(score_leaf(s, Metric::Gini).unwrap(), 0.0);
        prop_assert_eq!(score_leaf(s, Metric::Entropy).unwrap(), 0.0);
    }
    Ok(())
}

/// Exactly `floor(ratio * n)` trees go (at least one stays); survivors
/// outscore the eliminated when fitness values are distinct.
pub fn check_survivor_counts(fitness: &[f64], ratio: f64) -> CheckResult {
    let r = select_survivors(fitness, ratio).unwrap();
    let n = fitness.len();
    let expected = ((ratio * n as f64 + 1e-9).floor() as usize).min(n - 1);
    prop_assert_eq!(r.eliminated.len(), expected);
    prop_assert_eq!(r.survivors.len() + r.eliminated.len(), n);
    let mut all: Vec<usize> = r.survivors.iter().chain(&r.eliminated).copied().collect();
    all.sort_unstable();
    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    let mut sorted = fitness.to_vec();
    sorted.sort_by(f64::total_cmp);
    let distinct = sorted.windows(2).all(|w| w[0] < w[1]);
    if distinct && !r.eliminated.is_empty() {
        let min_s = r.survivors.iter().map(|&t| fitness[t]).fold(f64::INFINITY, f64::min);
        let max_e = r.eliminated.iter().map(|&t| fitness[t]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_s >= max_e);
    }
    prop_assert_eq!(r, select_survivors(fitness, ratio).unwrap());
    Ok(())
}

/// Every test row gets exactly one prediction and an exit level in range;
/// rows exiting early are easy at their exit level and hard before it.
pub fn check_prediction_coverage(data: &SmallData, metric: Metric) -> CheckResult {
    let d = data.build();
    let (m, _) = train_cascade(&d, &small_train_config(data.seed, metric)).unwrap();
    let probe = SmallData {
        seed: data.seed ^ 1,
        ..data.clone()
    }
    .build();
    let p = predict_cascade(&m, &probe).unwrap();
    prop_assert_eq!(p.predictions.len(), probe.n_rows());
    prop_assert_eq!(p.level_used.len(), probe.n_rows());
    let last = m.n_levels();
    for (r, &l) in p.level_used.iter().enumerate() {
        prop_assert!((1..=last).contains(&l));
        let x = probe.row(r);
        let easy_at = |level: usize| {
            let lv = &m.levels[level - 1];
            lv.forest
                .trees()
                .iter()
                .enumerate()
                .all(|(t, tree)| lv.score_table.score(t, tree.route(x).unwrap()) > lv.score_table.sigma())
        };
        for earlier in 1..l {
            prop_assert!(!easy_at(earlier));
        }
        if l < last {
            prop_assert!(easy_at(l));
        }
        prop_assert_eq!(p.predictions[r], m.levels[l - 1].forest.predict(x).unwrap());
    }
    Ok(())
}

/// Next level's input equals this level's hard set unless the split was
/// annulled; sizes add up; the model holds one level per kept iteration.
pub fn check_monotone_data_flow(data: &SmallData, metric: Metric) -> CheckResult {
    let d = data.build();
    let (m, report) = train_cascade(&d, &small_train_config(data.seed, metric)).unwrap();
    prop_assert_eq!(report.levels[0].n_rows_in, d.n_rows());
    for l in &report.levels {
        prop_assert_eq!(l.n_easy + l.n_hard, l.n_rows_in);
        prop_assert_eq!(l.class_counts_hard.iter().sum::<usize>(), l.n_hard);
    }
    for w in report.levels.windows(2) {
        if w[0].division_applied {
            prop_assert_eq!(w[1].n_rows_in, w[0].n_hard);
            prop_assert_eq!(&w[1].class_counts_in, &w[0].class_counts_hard);
        } else {
            prop_assert_eq!(w[1].n_rows_in, w[0].n_rows_in);
        }
    }
    let kept = report.levels.iter().filter(|l| l.level_kept).count();
    prop_assert_eq!(m.n_levels(), kept);
    if report.stop_reason == dbrf::StopReason::EarlyStop {
        prop_assert_eq!(
            report.levels.last().unwrap().rule_triggered,
            dbrf::RuleTriggered::EarlyStop
        );
    }
    Ok(())
}

/// Identical models and predictions with 1, 2 and 3 worker threads.
pub fn check_thread_determinism(data: &SmallData, metric: Metric) -> CheckResult {
    let d = data.build();
    let cfg = small_train_config(data.seed, metric);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (m, r) = train_cascade(&d, &cfg).unwrap();
            let p = predict_cascade(&m, &d).unwrap();
            (m, r, p)
        })
    };
    let one = run(1);
    for threads in [2, 3] {
        let other = run(threads);
        prop_assert!(one == other, "results differ with {threads} threads");
    }
    Ok(())
}

/// A one-level cascade without elimination or validation predicts exactly
/// like the plain forest with the same seed.
pub fn check_rf_equivalence(data: &SmallData, n_trees: usize) -> CheckResult {
    let d = data.build();
    let cfg = TrainConfig::plain_forest(n_trees, data.seed);
    let (m, _) = train_cascade(&d, &cfg).unwrap();
    let f = fit_forest(&d, &cfg.forest_config(), data.seed).unwrap();
    let probe = SmallData {
        seed: data.seed.wrapping_add(17),
        ..data.clone()
    }
    .build();
    for set in [&d, &probe] {
        let p = predict_cascade(&m, set).unwrap();
        prop_assert_eq!(p.predictions, f.predict_all(set).unwrap());
    }
    Ok(())
}

pub fn scores_and_truth() -> impl Strategy<Value = (Vec<f64>, Vec<u32>)> {
    prop::collection::vec((0u32..20, 0u32..2), 2..60)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1 == 0) && v.iter().any(|p| p.1 == 1))
        .prop_map(|v| {
            (
                v.iter().map(|p| f64::from(p.0) / 20.0).collect(),
                v.iter().map(|p| p.1).collect(),
            )
        })
}

/// AUC is unchanged by strictly increasing transforms, matches the pairwise
/// count, and reverses under negation.
pub fn check_auc_properties(scores: &[f64], truth: &[u32]) -> CheckResult {
    let a = auc_roc(scores, truth).unwrap();
    let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect();
    prop_assert_eq!(a, auc_roc(&transformed, truth).unwrap());
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti == 1 && tj == 0 {
                pairs += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    prop_assert!((a - num / pairs).abs() < 1e-12);
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    prop_assert!((auc_roc(&neg, truth).unwrap() - (1.0 - a)).abs() < 1e-12);
    Ok(())
}

/// Accuracy equals the confusion-matrix trace over n.
pub fn check_accuracy_trace(pred: &[u32], truth: &[u32], n_classes: usize) -> CheckResult {
    let m = confusion(pred, truth, n_classes).unwrap();
    let trace: usize = (0..n_classes).map(|i| m[i][i]).sum();
    let total: usize = m.iter().flatten().sum();
    prop_assert_eq!(total, pred.len());
    prop_assert!((accuracy(pred, truth).unwrap() - trace as f64 / total as f64).abs() < 1e-15);
    Ok(())
}

/// Save, load and save again: equal models, identical bytes, identical
/// predictions.
pub fn check_persist_round_trip(data: &SmallData, metric: Metric) -> CheckResult {
    let d = data.build();
    let (m, _) = train_cascade(&d, &small_train_config(data.seed, metric)).unwrap();
    let text = dbrf::persist::to_json(&m).unwrap();
    let loaded = dbrf::persist::from_json(&text).unwrap();
    prop_assert_eq!(&loaded, &m);
    prop_assert_eq!(dbrf::persist::to_json(&loaded).unwrap(), text);
    prop_assert_eq!(predict_cascade(&m, &d).unwrap(), predict_cascade(&loaded, &d).unwrap());
    Ok(())
}
