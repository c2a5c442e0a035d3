//! Evaluation metrics: ROC AUC, expected calibration error and the
//! prediction rejection ratio.

use crate::dirichlet::ProbVector;
use crate::error::{check_nonempty, Error, Result};

/// ROC AUC for separating `positive` scores (expected higher) from
/// `negative` ones, via the Mann–Whitney statistic with ties counted half.
pub fn roc_auc(negative: &[f64], positive: &[f64]) -> Result<f64> {
    check_nonempty("negative scores", negative.len())?;
    check_nonempty("positive scores", positive.len())?;
    if negative.iter().chain(positive).any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score passed to roc_auc".into()));
    }
    let mut all: Vec<(f64, bool)> = negative
        .iter()
        .map(|&s| (s, false))
        .chain(positive.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Expected calibration error of the argmax prediction over `bins`
/// equal-width confidence bins.
pub fn expected_calibration_error(
    probs: &[ProbVector],
    labels: &[usize],
    bins: usize,
) -> Result<f64> {
    check_nonempty("predictions", probs.len())?;
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for (p, &y) in probs.iter().zip(labels) {
        let conf = p.max();
        let b = ((conf * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += conf;
        correct[b] += (p.argmax() == y) as usize;
    }
    let n = probs.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            (c / n) * (correct[b] as f64 / c - conf_sum[b] / c).abs()
        })
        .sum())
}

/// Prediction rejection ratio. Samples are rejected in order of decreasing
/// `uncertainty`; rejected errors count as fixed. The returned value is the
/// area between the resulting error curve and the random-rejection curve,
/// divided by the same area for the ideal rejection order. NaN when there
/// are no errors to reject.
pub fn prediction_rejection_ratio(uncertainty: &[f64], correct: &[bool]) -> Result<f64> {
    check_nonempty("uncertainties", uncertainty.len())?;
    if uncertainty.len() != correct.len() {
        return Err(Error::DimensionMismatch {
            expected: uncertainty.len(),
            got: correct.len(),
        });
    }
    let n = uncertainty.len();
    let errors = correct.iter().filter(|c| !**c).count();
    if errors == 0 {
        return Ok(f64::NAN);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| uncertainty[b].total_cmp(&uncertainty[a]).then(a.cmp(&b)));
    let e0 = errors as f64;
    let (mut model_area, mut oracle_area) = (0.0, 0.0);
    let mut remaining = e0;
    for (j, &idx) in order.iter().enumerate() {
        if !correct[idx] {
            remaining -= 1.0;
        }
        let rejected = (j + 1) as f64;
        let random = e0 * (1.0 - rejected / n as f64);
        let oracle = (e0 - rejected).max(0.0);
        model_area += random - remaining;
        oracle_area += random - oracle;
    }
    Ok(model_area / oracle_area)
}
