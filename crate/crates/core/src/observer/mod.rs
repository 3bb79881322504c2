//! Learning the observer matrix `D*`.
//!
//! The closed form: for `i != j`,
//! `d_ij = relu(λ·μ⁻_ij − (1−λ)·μ⁺_ij)`, where `μ±` are the mean outer
//! products of the positive and negative soft-predictions, followed by a
//! rescale so that `Tr(D Dᵀ) = K`. When every entry is zero the matrix
//! cannot be normalized and the Hamming matrix (Gini score) is used instead.

pub mod oracle;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{check_lambda, EvalDataset, ProbVector};
use crate::error::{Error, Result};
use crate::scores::bilinear_score;

/// Relative tolerance on `Tr(D Dᵀ) = K`.
pub const NORM_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_NORM_BUDGET: f64 = 1.0;

/// Compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Soft-predictions split into positive (correct / in-distribution) and
/// negative (misclassified / mismatched) instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedProbs {
    pub positives: Vec<ProbVector>,
    pub negatives: Vec<ProbVector>,
}

impl GroupedProbs {
    pub fn new(positives: Vec<ProbVector>, negatives: Vec<ProbVector>) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::Degenerate("positive group is empty".into()));
        }
        if negatives.is_empty() {
            return Err(Error::Degenerate("negative group is empty".into()));
        }
        let c = positives[0].num_classes();
        if let Some(p) = positives.iter().chain(&negatives).find(|p| p.num_classes() != c) {
            return Err(Error::Dimension {
                expected: c,
                actual: p.num_classes(),
            });
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    /// Splits `probs` by `positive[i]`, preserving order within each side.
    pub fn from_flags(probs: Vec<ProbVector>, positive: &[bool]) -> Result<Self> {
        if probs.len() != positive.len() {
            return Err(Error::Input(format!(
                "{} probability vectors but {} group flags",
                probs.len(),
                positive.len()
            )));
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (p, &is_pos) in probs.into_iter().zip(positive) {
            if is_pos {
                pos.push(p);
            } else {
                neg.push(p);
            }
        }
        Self::new(pos, neg)
    }

    pub fn n_positive(&self) -> usize {
        self.positives.len()
    }

    pub fn n_negative(&self) -> usize {
        self.negatives.len()
    }

    pub fn num_classes(&self) -> usize {
        self.positives[0].num_classes()
    }

    /// `N₊ / (N₊ + N₋)`.
    pub fn balanced_lambda(&self) -> f64 {
        self.n_positive() as f64 / (self.n_positive() + self.n_negative()) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GroupingMode {
    /// Correct predictions are positives.
    Correctness,
    /// Primary-dataset samples are positives, secondary-dataset samples negatives.
    Membership,
}

pub fn assign_groups(
    dataset: &EvalDataset,
    mode: GroupingMode,
    secondary: Option<&EvalDataset>,
    temperature: f64,
) -> Result<GroupedProbs> {
    match mode {
        GroupingMode::Correctness => {
            let probs = dataset.probs(temperature)?;
            GroupedProbs::from_flags(probs, &dataset.correct_flags()).map_err(|e| match e {
                Error::Degenerate(m) => Error::Degenerate(format!("{m} (no {} samples)", if m.starts_with("positive") { "correctly classified" } else { "misclassified" })),
                other => other,
            })
        }
        GroupingMode::Membership => {
            let secondary = secondary.ok_or_else(|| {
                Error::Parameter("membership grouping needs a secondary dataset".into())
            })?;
            if secondary.num_classes != dataset.num_classes {
                return Err(Error::Dimension {
                    expected: dataset.num_classes,
                    actual: secondary.num_classes,
                });
            }
            GroupedProbs::new(dataset.probs(temperature)?, secondary.probs(temperature)?)
        }
    }
}

/// Mean outer product `(1/n) Σ pᵀp`, accumulated in input order with
/// compensated sums. Only the upper triangle is accumulated and then
/// mirrored, so the result is exactly symmetric.
pub fn cooccurrence_mean(probs: &[ProbVector]) -> Result<Array2<f64>> {
    let first = probs
        .first()
        .ok_or_else(|| Error::Degenerate("co-occurrence of an empty set".into()))?;
    let c = first.num_classes();
    let mut acc = vec![KahanSum::default(); c * (c + 1) / 2];
    for p in probs {
        if p.num_classes() != c {
            return Err(Error::Dimension {
                expected: c,
                actual: p.num_classes(),
            });
        }
        let v = p.as_slice();
        let mut k = 0;
        for i in 0..c {
            for j in i..c {
                acc[k].add(v[i] * v[j]);
                k += 1;
            }
        }
    }
    let n = probs.len() as f64;
    let mut mean = Array2::zeros((c, c));
    let mut k = 0;
    for i in 0..c {
        for j in i..c {
            let m = acc[k].value() / n;
            mean[[i, j]] = m;
            mean[[j, i]] = m;
            k += 1;
        }
    }
    Ok(mean)
}

/// A learned observer matrix with its constraint metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RelUMatrix {
    entries: Array2<f64>,
    norm_budget: f64,
    lambda_used: f64,
    pub(crate) fallback: bool,
    n_positive: usize,
    n_negative: usize,
}

impl RelUMatrix {
    /// The Hamming matrix scaled to `Tr(D Dᵀ) = K`.
    pub fn hamming_fallback(num_classes: usize, norm_budget: f64, lambda_used: f64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Input("observer matrix needs at least 2 classes".into()));
        }
        check_budget(norm_budget)?;
        let scale = (norm_budget / (num_classes * num_classes - num_classes) as f64).sqrt();
        Ok(Self {
            entries: Array2::from_shape_fn((num_classes, num_classes), |(i, j)| if i == j { 0.0 } else { scale }),
            norm_budget,
            lambda_used,
            fallback: true,
            n_positive: 0,
            n_negative: 0,
        })
    }

    /// Wraps an explicit matrix after checking every constraint.
    pub fn from_parts(entries: Array2<f64>, norm_budget: f64, lambda_used: f64, fallback: bool) -> Result<Self> {
        let m = Self {
            entries,
            norm_budget,
            lambda_used,
            fallback,
            n_positive: 0,
            n_negative: 0,
        };
        m.check_constraints()?;
        Ok(m)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn norm_budget(&self) -> f64 {
        self.norm_budget
    }

    pub fn lambda_used(&self) -> f64 {
        self.lambda_used
    }

    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        (self.n_positive, self.n_negative)
    }

    /// Off-diagonal value of the fallback matrix, `sqrt(K / (C² − C))`.
    pub fn fallback_scale(&self) -> f64 {
        let c = self.num_classes();
        (self.norm_budget / (c * c - c) as f64).sqrt()
    }

    /// Minimizer of the constrained objective. For a fallback matrix this
    /// is the zero matrix, not the Hamming substitute used for scoring.
    pub fn solution(&self) -> Array2<f64> {
        if self.fallback {
            Array2::zeros(self.entries.raw_dim())
        } else {
            self.entries.clone()
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    /// Position `(i, j)`, `i < j`, of the largest off-diagonal entry
    /// (first in row-major order on ties).
    pub fn largest_off_diagonal(&self) -> (usize, usize) {
        let c = self.num_classes();
        let mut best = (0, 1);
        for i in 0..c {
            for j in (i + 1)..c {
                if self.entries[[i, j]] > self.entries[[best.0, best.1]] {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn check_constraints(&self) -> Result<()> {
        let (r, c) = self.entries.dim();
        if r != c || r < 2 {
            return Err(Error::Input(format!("observer matrix must be square with C >= 2, got {r}x{c}")));
        }
        check_budget(self.norm_budget)?;
        check_lambda(self.lambda_used)?;
        for i in 0..c {
            if self.entries[[i, i]] != 0.0 {
                return Err(Error::Input(format!("diagonal entry ({i},{i}) is not zero")));
            }
            for j in 0..c {
                let v = self.entries[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Input(format!("entry ({i},{j}) = {v} is not a finite non-negative value")));
                }
                if v != self.entries[[j, i]] {
                    return Err(Error::Input(format!("matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        let norm = self.frobenius_sq();
        if ((norm - self.norm_budget) / self.norm_budget).abs() > NORM_TOLERANCE {
            return Err(Error::Input(format!(
                "Tr(DDᵀ) = {norm} differs from the budget {}",
                self.norm_budget
            )));
        }
        Ok(())
    }
}

fn check_budget(k: f64) -> Result<()> {
    if k.is_finite() && k > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("norm budget K must be positive, got {k}")))
    }
}

/// The unnormalized closed-form entries `relu(λ·μ⁻ − (1−λ)·μ⁺)` with a
/// zero diagonal.
pub fn unnormalized_solution(groups: &GroupedProbs, lambda: f64) -> Result<Array2<f64>> {
    check_lambda(lambda)?;
    let pos = cooccurrence_mean(&groups.positives)?;
    let neg = cooccurrence_mean(&groups.negatives)?;
    let c = groups.num_classes();
    let mut d = Array2::zeros((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let v = (lambda * neg[[i, j]] - (1.0 - lambda) * pos[[i, j]]).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Closed-form `D*`, normalized to `Tr(D Dᵀ) = K`.
pub fn fit_d_matrix(groups: &GroupedProbs, lambda: f64, norm_budget: f64) -> Result<RelUMatrix> {
    check_budget(norm_budget)?;
    let raw = unnormalized_solution(groups, lambda)?;
    let norm_sq: f64 = raw.iter().map(|v| v * v).sum();
    let mut fitted = if norm_sq == 0.0 {
        log::debug!("closed-form observer matrix is all zero; using the Hamming fallback");
        RelUMatrix::hamming_fallback(groups.num_classes(), norm_budget, lambda)?
    } else {
        let scale = (norm_budget / norm_sq).sqrt();
        RelUMatrix {
            entries: raw.mapv(|v| v * scale),
            norm_budget,
            lambda_used: lambda,
            fallback: false,
            n_positive: 0,
            n_negative: 0,
        }
    };
    fitted.n_positive = groups.n_positive();
    fitted.n_negative = groups.n_negative();
    Ok(fitted)
}

/// `(1−λ)·mean₊(p D pᵀ) − λ·mean₋(p D pᵀ)`, evaluated sample by sample.
pub fn objective_value(d: &Array2<f64>, groups: &GroupedProbs, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mean_score = |set: &[ProbVector]| -> Result<f64> {
        let mut acc = KahanSum::default();
        for p in set {
            acc.add(bilinear_score(p, d)?);
        }
        Ok(acc.value() / set.len() as f64)
    };
    Ok((1.0 - lambda) * mean_score(&groups.positives)? - lambda * mean_score(&groups.negatives)?)
}

/// Serialized form: the matrix plus its metadata. The CSV export writes the
/// entries alone; the JSON sidecar carries everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelUMatrixFile {
    pub num_classes: usize,
    pub norm_budget: f64,
    pub lambda: f64,
    pub fallback: bool,
    pub n_positive: usize,
    pub n_negative: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl RelUMatrix {
    pub fn to_file(&self, with_entries: bool, provenance: Option<serde_json::Value>) -> RelUMatrixFile {
        RelUMatrixFile {
            num_classes: self.num_classes(),
            norm_budget: self.norm_budget,
            lambda: self.lambda_used,
            fallback: self.fallback,
            n_positive: self.n_positive,
            n_negative: self.n_negative,
            entries: with_entries.then(|| self.entries.rows().into_iter().map(|r| r.to_vec()).collect()),
            provenance,
        }
    }

    /// Rebuilds a matrix from its sidecar and entries (taken from
    /// `entries_override` when the sidecar does not embed them).
    pub fn from_file(file: &RelUMatrixFile, entries_override: Option<Array2<f64>>) -> Result<Self> {
        let entries = match (entries_override, &file.entries) {
            (Some(e), _) => e,
            (None, Some(rows)) => rows_to_array(rows)?,
            (None, None) => return Err(Error::Input("observer matrix file carries no entries".into())),
        };
        if entries.nrows() != file.num_classes {
            return Err(Error::Dimension {
                expected: file.num_classes,
                actual: entries.nrows(),
            });
        }
        let m = Self {
            entries,
            norm_budget: file.norm_budget,
            lambda_used: file.lambda,
            fallback: file.fallback,
            n_positive: file.n_positive,
            n_negative: file.n_negative,
        };
        m.check_constraints()?;
        Ok(m)
    }

    /// `C` lines of `C` comma-separated values with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.rows() {
            let cells: Vec<String> = row.iter().map(|v| format_17(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::Input(format!("row {i} has {} columns, expected {m}", r.len())));
    }
    Array2::from_shape_vec((n, m), rows.iter().flatten().copied().collect())
        .map_err(|e| Error::Input(e.to_string()))
}
