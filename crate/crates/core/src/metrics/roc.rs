use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores of positives (correct / in-distribution) and negatives
/// (misclassified / mismatched), higher meaning more uncertain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPopulation {
    positive: Vec<f64>,
    negative: Vec<f64>,
}

impl ScoredPopulation {
    pub fn new(positive: Vec<f64>, negative: Vec<f64>) -> Result<Self> {
        if positive.is_empty() {
            return Err(Error::Degenerate("no positive scores".into()));
        }
        if negative.is_empty() {
            return Err(Error::Degenerate("no negative scores".into()));
        }
        if positive.iter().chain(&negative).any(|s| !s.is_finite()) {
            return Err(Error::Numerical("non-finite detection score".into()));
        }
        Ok(Self { positive, negative })
    }

    pub fn from_flags(scores: &[f64], positive: &[bool]) -> Result<Self> {
        if scores.len() != positive.len() {
            return Err(Error::Input(format!(
                "{} scores but {} positive flags",
                scores.len(),
                positive.len()
            )));
        }
        let (pos, neg): (Vec<_>, Vec<_>) = scores.iter().zip(positive).partition(|(_, p)| **p);
        Self::new(
            pos.into_iter().map(|(s, _)| *s).collect(),
            neg.into_iter().map(|(s, _)| *s).collect(),
        )
    }

    pub fn positive(&self) -> &[f64] {
        &self.positive
    }

    pub fn negative(&self) -> &[f64] {
        &self.negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Samples with score `<=` threshold are accepted as correct. The first
    /// point uses `-inf` (nothing accepted).
    pub threshold: f64,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// ROC curve swept over every distinct observed score, starting at `(0, 0)`
/// and ending at `(1, 1)`. Tied scores move both rates in one step.
pub fn roc_curve(pop: &ScoredPopulation) -> Vec<RocPoint> {
    let pos = sorted(&pop.positive);
    let neg = sorted(&pop.negative);
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::NEG_INFINITY,
    }];
    let (mut i, mut j) = (0, 0);
    while i < pos.len() || j < neg.len() {
        let t = match (pos.get(i), neg.get(j)) {
            (Some(a), Some(b)) => a.min(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => unreachable!(),
        };
        while i < pos.len() && pos[i] <= t {
            i += 1;
        }
        while j < neg.len() && neg[j] <= t {
            j += 1;
        }
        points.push(RocPoint {
            fpr: j as f64 / nn,
            tpr: i as f64 / np,
            threshold: t,
        });
    }
    points
}

fn check_level(tpr_level: f64) -> Result<()> {
    if tpr_level > 0.0 && tpr_level <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("TPR level must lie in (0, 1], got {tpr_level}")))
    }
}

/// FPR at the smallest threshold whose TPR reaches `tpr_level`, with no
/// interpolation between thresholds.
pub fn fpr_at_tpr(pop: &ScoredPopulation, tpr_level: f64) -> Result<f64> {
    check_level(tpr_level)?;
    Ok(fpr_at_tpr_from_curve(&roc_curve(pop), tpr_level))
}

pub(crate) fn fpr_at_tpr_from_curve(curve: &[RocPoint], tpr_level: f64) -> f64 {
    curve
        .iter()
        .find(|p| p.tpr >= tpr_level)
        .map_or(1.0, |p| p.fpr)
}

/// Probability that a random negative outscores a random positive, ties
/// counted as one half. Exact integer counting up to the final division.
pub fn auroc(pop: &ScoredPopulation) -> f64 {
    let pos = sorted(&pop.positive);
    let neg = sorted(&pop.negative);
    // Twice the number of (pos, neg) pairs with neg > pos, plus ties.
    let mut twice: u128 = 0;
    let (mut lo, mut hi) = (0usize, 0usize);
    for p in &pos {
        while lo < neg.len() && neg[lo] < *p {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < neg.len() && neg[hi] <= *p {
            hi += 1;
        }
        let greater = (neg.len() - hi) as u128;
        let ties = (hi - lo) as u128;
        twice += 2 * greater + ties;
    }
    twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64)
}

/// Trapezoidal area under an ROC curve.
pub fn auroc_trapezoid(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}
