//! Classification metrics over masked node subsets.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    #[serde(rename = "acc")]
    Accuracy,
    /// Binary tasks only; scores are the softmax probability of class 1.
    #[serde(rename = "auc")]
    RocAuc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "acc",
            Metric::RocAuc => "auc",
        }
    }

    pub fn evaluate(self, logits: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64> {
        match self {
            Metric::Accuracy => accuracy(logits, labels, mask),
            Metric::RocAuc => {
                if logits.cols() != 2 {
                    return Err(Error::Config(format!(
                        "ROC-AUC needs 2 classes, logits have {}",
                        logits.cols()
                    )));
                }
                let scores = positive_scores(logits);
                let positive: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
                roc_auc(&scores, &positive, mask)
            }
        }
    }
}

/// Row argmax, ties resolved toward the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn accuracy(logits: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over an empty mask".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::dim("accuracy", format!("{} labels for {} rows", labels.len(), logits.rows())));
    }
    let correct = mask
        .iter()
        .filter(|&&i| argmax(logits.row(i)) == labels[i])
        .count();
    Ok(correct as f64 / mask.len() as f64)
}

/// Softmax probability of class 1 per row.
pub fn positive_scores(logits: &Tensor) -> Vec<f64> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            (row[1] - max).exp() / sum
        })
        .collect()
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting 1/2.
pub fn roc_auc(scores: &[f64], positive: &[bool], mask: &[usize]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::dim("roc_auc", "scores and labels differ in length"));
    }
    let mut items: Vec<(f64, bool)> = mask.iter().map(|&i| (scores[i], positive[i])).collect();
    let n_pos = items.iter().filter(|x| x.1).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes in the mask".into()));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));

    // average 1-based ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += avg_rank * items[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
