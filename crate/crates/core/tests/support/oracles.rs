//! Hand-built fixtures checked against brute-force computations that use
//! explicit leaf predicates instead of tree routing. Each check panics on a
//! mismatch.

#![allow(dead_code)]

use dbrf::cascade::{predict_cascade, CascadeLevel, CascadeModel, TrainConfig};
use dbrf::data::{Dataset, FeatureSchema};
use dbrf::evolve::{select_survivors, tree_fitness};
use dbrf::forest::{Forest, ForestConfig};
use dbrf::hem::{build_score_table, partition_easy_hard, LeafScoreTable, Metric};
use dbrf::tree::{DecisionTree, TreeNode};

const TOL: f64 = 1e-12;

fn leaf(id: u32, n_classes: usize) -> TreeNode {
    // training counts are irrelevant to scoring; one sample of class 0
    let mut class_counts = vec![0; n_classes];
    class_counts[0] = 1;
    TreeNode::Leaf {
        leaf_id: id,
        class_counts,
        n_samples: 1,
    }
}

fn split(feature: u32, threshold: f64, left: u32, right: u32) -> TreeNode {
    TreeNode::Decision {
        feature,
        threshold,
        left,
        right,
    }
}

/// Tree A: x0 <= 2.5 -> leaf 0; else x1 <= 1.5 -> leaf 1 else leaf 2.
fn tree_a() -> DecisionTree {
    DecisionTree::from_nodes(
        vec![split(0, 2.5, 1, 2), leaf(0, 3), split(1, 1.5, 3, 4), leaf(1, 3), leaf(2, 3)],
        3,
        2,
    )
    .unwrap()
}

/// Tree B: x1 <= 0.5 -> leaf 0; else x0 <= 4.5 -> leaf 1 else leaf 2.
fn tree_b() -> DecisionTree {
    DecisionTree::from_nodes(
        vec![split(1, 0.5, 1, 2), leaf(0, 3), split(0, 4.5, 3, 4), leaf(1, 3), leaf(2, 3)],
        3,
        2,
    )
    .unwrap()
}

type Predicate = fn(&[f64]) -> bool;

const LEAVES_A: [Predicate; 3] = [
    |x| x[0] <= 2.5,
    |x| x[0] > 2.5 && x[1] <= 1.5,
    |x| x[0] > 2.5 && x[1] > 1.5,
];
const LEAVES_B: [Predicate; 3] = [
    |x| x[1] <= 0.5,
    |x| x[1] > 0.5 && x[0] <= 4.5,
    |x| x[1] > 0.5 && x[0] > 4.5,
];

/// Ten rows, three classes; no row has x0 > 4.5 with x1 > 0.5, so leaf 2
/// of tree B receives no candidates.
fn fixture() -> Dataset {
    let rows = vec![
        vec![1.0, 0.0],
        vec![2.0, 1.0],
        vec![1.5, 2.0],
        vec![3.0, 0.0],
        vec![3.5, 1.0],
        vec![4.0, 1.0],
        vec![3.0, 2.0],
        vec![4.0, 3.0],
        vec![5.0, 0.0],
        vec![2.0, 3.0],
    ];
    let labels = vec![0, 0, 1, 1, 1, 2, 2, 2, 1, 0];
    Dataset::from_rows(&rows, labels, 3).unwrap()
}

fn forest(trees: Vec<DecisionTree>) -> Forest {
    let n = trees.len();
    Forest::from_trees(trees, vec![0; n], ForestConfig::default()).unwrap()
}

/// Independent score of the rows satisfying `pred`.
fn oracle_score(d: &Dataset, pred: Predicate, metric: Metric) -> f64 {
    let n_classes = d.n_classes();
    let mut counts = vec![0usize; n_classes];
    for r in 0..d.n_rows() {
        if pred(d.row(r)) {
            counts[d.labels()[r] as usize] += 1;
        }
    }
    let cand: usize = counts.iter().sum();
    if cand == 0 {
        return match metric {
            Metric::Supp | Metric::Conf | Metric::F1 => 0.0,
            Metric::Gini => 1.0 / n_classes as f64 - 1.0,
            Metric::Entropy => -(n_classes as f64).ln(),
        };
    }
    let supp = cand as f64 / d.n_rows() as f64;
    let conf = *counts.iter().max().unwrap() as f64 / cand as f64;
    match metric {
        Metric::Supp => supp,
        Metric::Conf => conf,
        Metric::F1 => 2.0 * supp * conf / (supp + conf),
        Metric::Gini => {
            let mut s = -1.0;
            for &k in &counts {
                let p = k as f64 / cand as f64;
                s += p * p;
            }
            s
        }
        Metric::Entropy => {
            let mut s = 0.0;
            for &k in &counts {
                if k > 0 {
                    let p = k as f64 / cand as f64;
                    s += p * p.ln();
                }
            }
            s
        }
    }
}

fn oracle_scores(d: &Dataset, metric: Metric) -> Vec<Vec<f64>> {
    [LEAVES_A, LEAVES_B]
        .iter()
        .map(|leaves| leaves.iter().map(|&p| oracle_score(d, p, metric)).collect())
        .collect()
}

fn oracle_easy(d: &Dataset, scores: &[Vec<f64>], sigma: f64, trees: &[usize]) -> Vec<u64> {
    let sets = [LEAVES_A, LEAVES_B];
    (0..d.n_rows())
        .filter(|&r| {
            trees.iter().all(|&t| {
                let x = d.row(r);
                let l = sets[t].iter().position(|p| p(x)).unwrap();
                scores[t][l] > sigma
            })
        })
        .map(|r| d.row_ids()[r])
        .collect()
}

pub fn routing_matches_predicates() {
    let d = fixture();
    for (tree, leaves) in [(tree_a(), LEAVES_A), (tree_b(), LEAVES_B)] {
        for x in d.rows() {
            let hits: Vec<usize> = (0..3).filter(|&l| leaves[l](x)).collect();
            assert_eq!(hits.len(), 1);
            assert_eq!(tree.route(x).unwrap() as usize, hits[0]);
        }
    }
}

pub fn scores_sigma_partition_and_fitness_match_oracle() {
    let d = fixture();
    let f = forest(vec![tree_a(), tree_b()]);
    for metric in Metric::ALL {
        let expected = oracle_scores(&d, metric);
        let table = build_score_table(&f, &d, metric).unwrap();
        for (t, row) in expected.iter().enumerate() {
            for (l, &want) in row.iter().enumerate() {
                let got = table.score(t, l as u32);
                assert!((got - want).abs() <= TOL, "{metric} tree {t} leaf {l}: {got} vs {want}");
            }
        }
        let sigma: f64 = expected.iter().flatten().sum::<f64>() / 6.0;
        assert!((table.sigma() - sigma).abs() <= TOL, "{metric} sigma");

        let (easy, hard) = partition_easy_hard(&f, &table, &d).unwrap();
        let want = oracle_easy(&d, &expected, table.sigma(), &[0, 1]);
        assert_eq!(easy.row_ids(), want.as_slice(), "{metric} easy set");
        assert_eq!(easy.n_rows() + hard.n_rows(), d.n_rows());

        let fitness = tree_fitness(&f, &table).unwrap();
        for t in 0..2 {
            let want = expected[t].iter().sum::<f64>() / 3.0;
            assert!((fitness[t] - want).abs() <= TOL, "{metric} fitness {t}");
        }

        // eliminating one of two trees recomputes sigma over the survivor
        let sel = select_survivors(&fitness, 0.5).unwrap();
        // ties eliminate the larger index
        let low = if fitness[0] < fitness[1] { 0 } else { 1 };
        assert_eq!(sel.eliminated, vec![low]);
        let keep = sel.survivors[0];
        let survivor = f.subset(&sel.survivors).unwrap();
        let sub = table.subset(&sel.survivors, false).unwrap();
        let sigma_s = expected[keep].iter().sum::<f64>() / 3.0;
        assert!((sub.sigma() - sigma_s).abs() <= TOL);
        let (easy, _) = partition_easy_hard(&survivor, &sub, &d).unwrap();
        let want = oracle_easy(&d, &expected, sigma_s, &[keep]);
        assert_eq!(easy.row_ids(), want.as_slice(), "{metric} survivor easy set");
    }
}

pub fn literal_values() {
    let d = fixture();
    let f = forest(vec![tree_a(), tree_b()]);
    // tree A leaf 0 holds rows 0, 1, 2, 9 with labels 0, 0, 1, 0
    let t = build_score_table(&f, &d, Metric::Supp).unwrap();
    assert!((t.score(0, 0) - 0.4).abs() <= TOL);
    let t = build_score_table(&f, &d, Metric::Conf).unwrap();
    assert!((t.score(0, 0) - 0.75).abs() <= TOL);
    let t = build_score_table(&f, &d, Metric::F1).unwrap();
    assert!((t.score(0, 0) - 2.0 * 0.4 * 0.75 / 1.15).abs() <= TOL);
    assert_eq!(t.score(1, 2), 0.0);
    let t = build_score_table(&f, &d, Metric::Gini).unwrap();
    assert!((t.score(0, 0) - (0.75f64.powi(2) + 0.25f64.powi(2) - 1.0)).abs() <= TOL);
    assert!((t.score(1, 2) - (1.0 / 3.0 - 1.0)).abs() <= TOL);
}

/// Six rows, two single-feature trees with fixed scores.
pub fn six_row_partition_fixture() {
    let stump = |th: f64| {
        DecisionTree::from_nodes(
            vec![split(0, th, 1, 2), leaf(0, 2), leaf(1, 2)],
            2,
            1,
        )
        .unwrap()
    };
    let f = forest(vec![stump(2.5), stump(4.5)]);
    let scores = vec![vec![0.9, 0.2], vec![0.8, 0.7]];
    let table = LeafScoreTable::new(Metric::F1, scores.clone()).unwrap();
    let rows: Vec<Vec<f64>> = (1..=6).map(|i| vec![f64::from(i)]).collect();
    let d = Dataset::from_rows(&rows, vec![0, 0, 1, 1, 0, 1], 2).unwrap();
    let (easy, hard) = partition_easy_hard(&f, &table, &d).unwrap();
    let ths = [2.5, 4.5];
    let mut want = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let x = row[0];
        let ok = (0..2).all(|t| {
            let l = usize::from(x > ths[t]);
            scores[t][l] > table.sigma()
        });
        if ok {
            want.push(r as u64);
        }
    }
    // sigma = 0.65: rows 1 and 2 are easy (0.9, 0.8); 3..4 fail tree 0
    assert_eq!(want, vec![0, 1]);
    assert_eq!(easy.row_ids(), want.as_slice());
    assert_eq!(hard.row_ids(), &[2, 3, 4, 5]);
}

/// Two-level model: exit levels follow a brute-force walk of the rule.
pub fn cascade_exit_levels_match_walk() {
    let stump = |th: f64| {
        DecisionTree::from_nodes(
            vec![split(0, th, 1, 2), leaf(0, 2), leaf(1, 2)],
            2,
            1,
        )
        .unwrap()
    };
    let level = |idx: usize, ths: &[f64], scores: Vec<Vec<f64>>| CascadeLevel {
        level_index: idx,
        forest: forest(ths.iter().map(|&t| stump(t)).collect()),
        score_table: LeafScoreTable::new(Metric::F1, scores).unwrap(),
    };
    let l1 = level(0, &[2.0, 3.0], vec![vec![0.9, 0.1], vec![0.9, 0.3]]);
    let l2 = level(1, &[4.0], vec![vec![0.2, 0.8]]);
    let model = CascadeModel {
        levels: vec![l1.clone(), l2.clone()],
        schema: FeatureSchema::numeric(1, 2),
        config: TrainConfig::default(),
    };
    model.validate().unwrap();
    let xs: Vec<f64> = vec![0.0, 1.5, 2.0, 2.5, 3.5, 5.0];
    let d = Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), vec![0; 6], 2).unwrap();
    let p = predict_cascade(&model, &d).unwrap();
    for (r, &x) in xs.iter().enumerate() {
        let l1_easy = [2.0, 3.0].iter().enumerate().all(|(t, &th)| {
            let leaf = usize::from(x > th);
            l1.score_table.scores()[t][leaf] > l1.score_table.sigma()
        });
        let want = if l1_easy { 1 } else { 2 };
        assert_eq!(p.level_used[r], want, "x = {x}");
    }
}
