//! Conformal rejection baseline built on adaptive prediction sets.
//!
//! The conformity score of a labelled sample is the probability mass of
//! every class ranked at or above its true class (descending probability,
//! ties broken by class index). A prediction set is the shortest such
//! prefix reaching the calibrated quantile, and a prediction is rejected
//! when the set's second-largest probability is high.

use serde::{Deserialize, Serialize};

use crate::domain::ProbVector;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    pub alpha: f64,
    pub qhat: f64,
    pub n: usize,
}

/// Class indices by descending probability, ties by lower index.
fn ranked(p: &ProbVector) -> Vec<usize> {
    let v = p.as_slice();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    order
}

/// Cumulative mass of the classes ranked at or above `label`.
pub fn conformity_score(p: &ProbVector, label: usize) -> Result<f64> {
    if label >= p.num_classes() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} classes",
            p.num_classes()
        )));
    }
    let v = p.as_slice();
    let mut cum = 0.0;
    for k in ranked(p) {
        cum += v[k];
        if k == label {
            break;
        }
    }
    Ok(cum)
}

pub fn conformal_calibrate(probs: &[ProbVector], labels: &[usize], alpha: f64) -> Result<ConformalCalibration> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if probs.len() != labels.len() {
        return Err(Error::Input(format!("{} predictions but {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::Degenerate("conformal calibration on an empty split".into()));
    }
    let n = probs.len();
    if (n as f64) < 1.0 / alpha {
        log::warn!("calibration split of {n} samples is smaller than 1/alpha = {}", 1.0 / alpha);
    }
    let mut scores = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| conformity_score(p, y))
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(f64::total_cmp);
    // Rank ⌈(n+1)(1−α)⌉, nudged down so that exact integers are not
    // pushed up by rounding.
    let rank = (((n + 1) as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    let qhat = if rank == 0 {
        scores[0]
    } else if rank > n {
        1.0
    } else {
        scores[rank - 1]
    };
    Ok(ConformalCalibration { alpha, qhat, n })
}

/// Shortest descending-probability prefix whose mass reaches `qhat`; the
/// full label set when none does.
pub fn conformal_predict_set(p: &ProbVector, cal: &ConformalCalibration) -> Vec<usize> {
    let v = p.as_slice();
    let order = ranked(p);
    let mut cum = 0.0;
    for (k, &c) in order.iter().enumerate() {
        cum += v[c];
        if cum >= cal.qhat {
            return order[..=k].to_vec();
        }
    }
    order
}

/// Second-largest probability inside the prediction set, zero for a
/// singleton set.
pub fn conformal_reject_score(p: &ProbVector, cal: &ConformalCalibration) -> f64 {
    let set = conformal_predict_set(p, cal);
    if set.len() < 2 {
        0.0
    } else {
        p.as_slice()[set[1]]
    }
}
