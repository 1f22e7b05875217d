//! Ranking and calibration metrics for binary labels.

use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    Ok(())
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve by the trapezoid rule over distinct thresholds.
/// Tied scores earn half credit, matching the Mann–Whitney statistic.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both classes among the labels".into(),
        ));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i]).count();
        let neg = group.len() - pos;
        // trapezoid between (fp, tp) and (fp + neg, tp + pos), in counts
        area += neg as f64 * (tp as f64 + 0.5 * pos as f64);
        tp += pos;
        fp += neg;
    }
    debug_assert_eq!((tp, fp), (n_pos, n_neg));
    Ok(area / (n_pos as f64 * n_neg as f64))
}

/// Root-mean-square error between probabilities and 0/1 labels.
pub fn rmse(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(probs, labels)?;
    if probs.is_empty() {
        return Err(Error::UndefinedMetric("RMSE of an empty set".into()));
    }
    let sse: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - f64::from(u8::from(y))).powi(2))
        .sum();
    Ok((sse / probs.len() as f64).sqrt())
}

/// Average precision: sum over descending thresholds of the recall
/// increment times the precision at that threshold. Tied scores form a
/// single threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i]).count();
        tp += pos;
        seen += group.len();
        if pos > 0 {
            ap += (pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Competition ranking score, `AUC + (1 - RMSE)`.
pub fn combined_score(auc: f64, rmse: f64) -> f64 {
    auc + (1.0 - rmse)
}
