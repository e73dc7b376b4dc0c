//! Ranking and classification metrics. Outliers are the positive class and
//! the score orientation is outlierness (higher = more outlying).

use crate::error::{Error, Result};

fn check_binary(outlierness: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if outlierness.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores vs {} labels",
            outlierness.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("need at least one positive and one negative label".into()));
    }
    Ok((pos, neg))
}

/// AUROC via the rank-statistic (Mann-Whitney) formulation: the probability
/// that a random outlier out-ranks a random inlier, ties counted 1/2.
/// Invariant under strictly monotone transforms of the score.
pub fn auroc(outlierness: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary(outlierness, labels)?;
    let mut order: Vec<usize> = (0..outlierness.len()).collect();
    order.sort_by(|&a, &b| outlierness[a].total_cmp(&outlierness[b]));
    // Average ranks over tie groups (1-based ranks).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && outlierness[order[j]] == outlierness[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Area under the precision-recall curve by step integration: sweep
/// thresholds from the highest outlierness down, adding (ΔRecall × Precision)
/// per distinct score group.
pub fn auprc(outlierness: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_binary(outlierness, labels)?;
    let mut order: Vec<usize> = (0..outlierness.len()).collect();
    order.sort_by(|&a, &b| outlierness[b].total_cmp(&outlierness[a]));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0f64;
    let mut area = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && outlierness[order[j]] == outlierness[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// Harmonic mean of precision and recall over binary predictions; 0.0 when
/// undefined.
pub fn f1(predicted: &[bool], labels: &[bool]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}
