//! Detection and calibration metrics.
//!
//! Positives are correct classifications (or in-distribution samples). A
//! sample is accepted as correct when its uncertainty score is at most the
//! threshold, so TPR is the accepted fraction of positives and FPR the
//! accepted fraction of negatives.

pub mod calibration;
pub mod report;
pub mod risk;
pub mod roc;

use ndarray::Array2;

pub use calibration::{calibrate_temperature, ece, TemperatureFit, DEFAULT_ECE_BINS};
pub use report::{detection_metrics, DetectionMetrics, MetricsReport, SplitInfo, DEFAULT_TPR_LEVELS};
pub use risk::{risk_coverage, RiskCoverage, RiskCoveragePoint};
pub use roc::{auroc, auroc_trapezoid, fpr_at_tpr, roc_curve, RocPoint, ScoredPopulation};

use crate::domain::EvalDataset;

/// Cell `(true, predicted)` counts samples of class `true` predicted as
/// `predicted`.
pub fn confusion_matrix(dataset: &EvalDataset) -> Array2<usize> {
    let c = dataset.num_classes;
    let mut m = Array2::zeros((c, c));
    for s in &dataset.samples {
        m[[s.true_label, s.predicted_label]] += 1;
    }
    m
}

/// Unordered class pair `(i, j)`, `i < j`, with the largest `m_ij + m_ji`.
pub fn dominant_confusion_pair(confusion: &Array2<usize>) -> (usize, usize) {
    let c = confusion.nrows();
    let mut best = (0, 1);
    let mut best_mass = 0;
    for i in 0..c {
        for j in (i + 1)..c {
            let mass = confusion[[i, j]] + confusion[[j, i]];
            if mass > best_mass {
                best_mass = mass;
                best = (i, j);
            }
        }
    }
    best
}
