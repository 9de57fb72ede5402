//! Accuracy, binary ROC-AUC and confusion counts.

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeModel, CascadePrediction};
use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::data(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::data("empty prediction vector"));
    }
    Ok(())
}

pub fn accuracy(pred: &[u32], truth: &[u32]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `confusion[truth][pred]`.
pub fn confusion(pred: &[u32], truth: &[u32], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    check_lengths(pred.len(), truth.len())?;
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p as usize >= n_classes || t as usize >= n_classes {
            return Err(Error::data(format!(
                "class index out of range for {n_classes} classes"
            )));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Area under the ROC curve for class 1 vs class 0, in Mann-Whitney form:
/// the probability that a random positive outscores a random negative, with
/// ties counting one half.
pub fn auc_roc(scores: &[f64], truth: &[u32]) -> Result<f64> {
    check_lengths(scores.len(), truth.len())?;
    if let Some(bad) = truth.iter().find(|&&t| t > 1) {
        return Err(Error::data(format!("AUC needs binary labels, found {bad}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::data("AUC scores contain NaN"));
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("AUC needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of average 1-based ranks of the positives; ranks are half-integers
    // so the sum is exact
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| truth[k] == 1).count();
        pos_rank_sum += avg_rank * pos_in_group as f64;
        i = j;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

/// Accuracy and confusion; AUC too when `scores` is given, the task is
/// binary and both classes occur.
pub fn evaluate(
    pred: &[u32],
    truth: &[u32],
    n_classes: usize,
    scores: Option<&[f64]>,
) -> Result<EvalResult> {
    let confusion = confusion(pred, truth, n_classes)?;
    let auc = match scores {
        Some(s) if n_classes == 2 && truth.contains(&0) && truth.contains(&1) => {
            Some(auc_roc(s, truth)?)
        }
        _ => None,
    };
    Ok(EvalResult {
        accuracy: accuracy(pred, truth)?,
        auc,
        confusion,
        n: pred.len(),
    })
}

fn vote_fraction(votes: &[u32]) -> f64 {
    let total: u32 = votes.iter().sum();
    f64::from(votes[1]) / f64::from(total)
}

/// Fraction of the exit level's trees voting class 1 for `x`.
pub fn positive_score(m: &CascadeModel, x: &[f64]) -> Result<f64> {
    if m.n_classes() != 2 {
        return Err(Error::config("positive score needs a binary model"));
    }
    Ok(vote_fraction(&m.predict_row(x)?.votes))
}

/// [`positive_score`] for every row of a batch prediction.
pub fn positive_scores(p: &CascadePrediction) -> Result<Vec<f64>> {
    p.votes
        .iter()
        .map(|v| {
            if v.len() != 2 {
                return Err(Error::config("positive score needs a binary model"));
            }
            Ok(vote_fraction(v))
        })
        .collect()
}
