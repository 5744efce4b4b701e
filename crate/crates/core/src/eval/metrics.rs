use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::registry::quantile_sorted;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("bootstrap needs at least 10 points and 1 replicate")]
    InvalidBootstrap,
    #[error("{skipped} of {reps} bootstrap replicates were single-class")]
    DegenerateResampling { skipped: usize, reps: usize },
    #[error("{n} calibration points cannot support alpha = {alpha}")]
    TooFewCalibrationPoints { n: usize, alpha: f64 },
    #[error("threshold must lie in (0, 1)")]
    InvalidThreshold,
    #[error("no data")]
    Empty,
}

/// Area under the ROC curve via midranks: the probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, in integers so ties stay exact.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2.
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += pos_in_tie * (i + j + 2) as u128;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Percentile (2.5, 97.5) bootstrap interval of `metric` over `reps`
/// resamples with replacement. Single-class resamples are redrawn up to ten
/// times, then skipped; more than half skipped is an error.
pub fn bootstrap_ci<F>(metric: F, scores: &[f64], labels: &[bool], reps: usize, seed: u64) -> Result<(f64, f64), MetricError>
where
    F: Fn(&[f64], &[bool]) -> Result<f64, MetricError>,
{
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let n = scores.len();
    if n < 10 || reps == 0 {
        return Err(MetricError::InvalidBootstrap);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(reps);
    let mut skipped = 0;
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    for _ in 0..reps {
        let mut done = false;
        for _attempt in 0..=10 {
            for k in 0..n {
                let i = rng.random_range(0..n);
                s[k] = scores[i];
                l[k] = labels[i];
            }
            match metric(&s, &l) {
                Ok(v) => {
                    values.push(v);
                    done = true;
                    break;
                }
                Err(MetricError::SingleClass) => continue,
                Err(e) => return Err(e),
            }
        }
        if !done {
            skipped += 1;
        }
    }
    if skipped * 2 > reps || values.is_empty() {
        return Err(MetricError::DegenerateResampling { skipped, reps });
    }
    values.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975)))
}

/// Split-conformal half-width: the k-th smallest absolute residual with
/// `k = ceil((n + 1)(1 - alpha))`.
pub fn conformal_interval(residuals: &[f64], alpha: f64) -> Result<f64, MetricError> {
    let n = residuals.len();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricError::TooFewCalibrationPoints { n, alpha });
    }
    let k = ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil() as usize;
    if n == 0 || k > n {
        return Err(MetricError::TooFewCalibrationPoints { n, alpha });
    }
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    Ok(abs[k.max(1) - 1])
}

/// Decision-curve net benefit at threshold `pt`: `TP/N - FP/N * pt/(1-pt)`,
/// calling a case positive when its score is at least `pt`.
pub fn net_benefit(scores: &[f64], labels: &[bool], pt: f64) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if !(pt > 0.0 && pt < 1.0) {
        return Err(MetricError::InvalidThreshold);
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        if s >= pt {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(net_benefit_counts(tp, fp, scores.len(), pt))
}

pub fn net_benefit_counts(tp: usize, fp: usize, n: usize, pt: f64) -> f64 {
    let n = n as f64;
    tp as f64 / n - fp as f64 / n * (pt / (1.0 - pt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &[true, false, true, false]), Ok(0.75));
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &[true, true, false, false]), Ok(1.0));
        assert_eq!(auroc(&[0.4; 6], &[true, false, true, false, false, true]), Ok(0.5));
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
    }

    #[test]
    fn conformal_examples() {
        assert_eq!(conformal_interval(&[0.5, -1.0, 1.5, 2.0], 0.5), Ok(1.5));
        assert!(matches!(
            conformal_interval(&[0.5, 1.0, 1.5, 2.0], 0.01),
            Err(MetricError::TooFewCalibrationPoints { .. })
        ));
        assert_eq!(conformal_interval(&[0.0; 20], 0.1), Ok(0.0));
        // (9 + 1) * 0.9 is 9.000000000000002 in floating point; k must be 9.
        let r: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(conformal_interval(&r, 0.1), Ok(9.0));
    }

    #[test]
    fn net_benefit_examples() {
        let nb = net_benefit_counts(3, 2, 10, 0.2);
        assert!((nb - 0.25).abs() < 1e-12);
        let scores = [0.9, 0.9, 0.9, 0.5, 0.5, 0.1, 0.1, 0.1, 0.1, 0.1];
        let labels = [true, true, true, false, false, false, false, false, false, true];
        assert!((net_benefit(&scores, &labels, 0.2).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(net_benefit(&[0.1; 4], &[true, false, true, false], 0.5), Ok(0.0));
        assert_eq!(net_benefit(&[0.9, 0.1, 0.8], &[true, false, true], 0.5), Ok(2.0 / 3.0));
        // Always-positive classifier at a vanishing threshold approaches prevalence.
        let nb = net_benefit(&[1.0; 4], &[true, false, false, false], 1e-4).unwrap();
        assert!((nb - 0.25).abs() < 1e-3);
    }

    #[test]
    fn bootstrap_of_constant_metric() {
        let s: Vec<f64> = (0..20).map(f64::from).collect();
        let l: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        assert_eq!(bootstrap_ci(|_, _| Ok(0.7), &s, &l, 100, 1), Ok((0.7, 0.7)));
        assert_eq!(bootstrap_ci(|_, _| Ok(0.7), &s, &l, 0, 1), Err(MetricError::InvalidBootstrap));
    }
}
