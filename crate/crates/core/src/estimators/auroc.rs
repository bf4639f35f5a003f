//! Area under the ROC curve, rank formulation with ties counted ½.

use crate::error::{Error, Result};

pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let pos: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let neg: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(!l))).collect();
    auroc_weighted(scores, &pos, &neg)
}

/// AUROC where item `k` stands for `pos[k]` positives and `neg[k]` negatives
/// sharing the score `scores[k]`.
pub fn auroc_weighted(scores: &[f64], pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.len() != scores.len() || neg.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: pos.len().min(neg.len()),
        });
    }
    let total_pos: f64 = pos.iter().sum();
    let total_neg: f64 = neg.iter().sum();
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut below_neg = 0.0;
    let mut wins = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut group_pos, mut group_neg) = (0.0, 0.0);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            group_pos += pos[order[end]];
            group_neg += neg[order[end]];
            end += 1;
        }
        wins += group_pos * below_neg + 0.5 * group_pos * group_neg;
        below_neg += group_neg;
        start = end;
    }
    Ok(wins / (total_pos * total_neg))
}
