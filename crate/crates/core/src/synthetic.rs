//! Seeded synthetic datasets for tests and benchmarks.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::seed;

fn normal(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Isotropic unit-variance blobs. Class `c` is centred at `separation * c`
/// on every axis; labels cycle through the classes in row order.
pub fn gaussian_blobs(
    n_rows: usize,
    n_features: usize,
    n_classes: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    let mut rng = seed::rng(seed);
    let mut rows = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let c = i % n_classes;
        rows.push(
            (0..n_features)
                .map(|_| separation * c as f64 + normal(&mut rng))
                .collect(),
        );
        labels.push(c as u32);
    }
    Dataset::from_rows(&rows, labels, n_classes).expect("well-formed blobs")
}

/// Binary data with `ratio` negatives (class 0) per positive (class 1).
/// Negatives are standard normal. Positives are shifted by `shift` on the
/// first half of the features, so the classes overlap partly.
pub fn imbalanced_binary(
    n_rows: usize,
    n_features: usize,
    ratio: f64,
    shift: f64,
    seed: u64,
) -> Dataset {
    let mut rng = seed::rng(seed);
    let n_pos = ((n_rows as f64 / (ratio + 1.0)).round() as usize).clamp(1, n_rows - 1);
    let mut is_pos = vec![false; n_rows];
    is_pos[..n_pos].iter_mut().for_each(|p| *p = true);
    // Fisher-Yates so positives are spread through the file
    for i in (1..n_rows).rev() {
        let j = rng.random_range(0..=i);
        is_pos.swap(i, j);
    }
    let informative = n_features.div_ceil(2);
    let rows: Vec<Vec<f64>> = is_pos
        .iter()
        .map(|&p| {
            (0..n_features)
                .map(|j| {
                    let x = normal(&mut rng);
                    if p && j < informative {
                        x + shift
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let labels = is_pos.iter().map(|&p| u32::from(p)).collect();
    Dataset::from_rows(&rows, labels, 2).expect("well-formed binary data")
}

/// Random small dataset with integer-valued features (plenty of ties) and
/// uniform labels.
pub fn random_small(n_rows: usize, n_features: usize, n_classes: usize, levels: u32, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let rows: Vec<Vec<f64>> = (0..n_rows)
        .map(|_| {
            (0..n_features)
                .map(|_| f64::from(rng.random_range(0..levels)))
                .collect()
        })
        .collect();
    let labels = (0..n_rows)
        .map(|_| rng.random_range(0..n_classes as u32))
        .collect();
    Dataset::from_rows(&rows, labels, n_classes).expect("well-formed random data")
}
