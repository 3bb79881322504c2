//! Per-sample uncertainty scores.
//!
//! Every function here returns a value where higher means "more uncertain",
//! i.e. more likely to be a misclassification. MSP is flipped to `1 - max p`
//! to fit that orientation.

use ndarray::Array2;

use crate::domain::ProbVector;
use crate::error::{Error, Result};
use crate::observer::RelUMatrix;

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    -p.as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Gini concentration `1 - Σ p²`.
pub fn gini_score(p: &ProbVector) -> f64 {
    1.0 - p.as_slice().iter().map(|v| v * v).sum::<f64>()
}

pub fn msp_confidence(p: &ProbVector) -> f64 {
    p.max()
}

pub fn msp_uncertainty(p: &ProbVector) -> f64 {
    1.0 - p.max()
}

/// `p D pᵀ` for an arbitrary square matrix.
pub fn bilinear_score(p: &ProbVector, d: &Array2<f64>) -> Result<f64> {
    let c = p.num_classes();
    if d.nrows() != c || d.ncols() != c {
        return Err(Error::Dimension {
            expected: c,
            actual: d.nrows().max(d.ncols()),
        });
    }
    let p = p.as_slice();
    let mut total = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let row: f64 = d.row(i).iter().zip(p).map(|(dij, pj)| dij * pj).sum();
        total += pi * row;
    }
    Ok(total)
}

/// Relative uncertainty `p D* pᵀ`.
///
/// A fallback matrix scores with the unit Hamming matrix, which is exactly
/// [`gini_score`]. The stored fallback entries differ from it only by a
/// positive factor, and multiplying by that factor in floating point could
/// merge nearly equal scores into ties.
pub fn rel_u_score(p: &ProbVector, d: &RelUMatrix) -> Result<f64> {
    if d.num_classes() != p.num_classes() {
        return Err(Error::Dimension {
            expected: d.num_classes(),
            actual: p.num_classes(),
        });
    }
    if d.is_fallback() {
        return Ok(gini_score(p));
    }
    bilinear_score(p, d.entries())
}

/// `1` off the diagonal, `0` on it.
pub fn hamming_matrix(num_classes: usize) -> Array2<f64> {
    Array2::from_shape_fn((num_classes, num_classes), |(i, j)| if i == j { 0.0 } else { 1.0 })
}
