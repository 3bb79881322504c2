use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::calibration::{ece, DEFAULT_ECE_BINS};
use super::risk::risk_coverage;
use super::roc::{auroc, fpr_at_tpr_from_curve, roc_curve, ScoredPopulation};
use crate::domain::{DetectorConfig, Method, ProbVector};
use crate::error::Result;

pub const DEFAULT_TPR_LEVELS: [f64; 3] = [0.9, 0.95, 0.99];

/// Key used for a TPR level in [`DetectionMetrics::fpr_at_tpr`].
pub fn tpr_key(level: f64) -> String {
    format!("{level}")
}

/// The numbers a detector earns on one evaluation split. Curves keep only
/// the rate pairs so that two detectors with identical rankings produce
/// identical values, whatever their score scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub fpr_at_tpr: BTreeMap<String, f64>,
    pub auroc: f64,
    pub aurc: f64,
    /// Calibration error of the classifier's probabilities at the
    /// detector's temperature; absent when no labelled samples exist.
    pub ece: Option<f64>,
    /// `[fpr, tpr]` pairs.
    pub roc_points: Vec<[f64; 2]>,
    /// `[coverage, risk]` pairs.
    pub rc_points: Vec<[f64; 2]>,
}

impl DetectionMetrics {
    pub fn fpr_at(&self, level: f64) -> Option<f64> {
        self.fpr_at_tpr.get(&tpr_key(level)).copied()
    }

    pub fn fpr95(&self) -> f64 {
        self.fpr_at(0.95).unwrap_or(f64::NAN)
    }
}

/// Computes every detection metric. `calibration` holds the probabilities
/// and labels used for ECE.
pub fn detection_metrics(
    scores: &[f64],
    positive: &[bool],
    calibration: Option<(&[ProbVector], &[usize])>,
    tpr_levels: &[f64],
) -> Result<DetectionMetrics> {
    let pop = ScoredPopulation::from_flags(scores, positive)?;
    let curve = roc_curve(&pop);
    let mut fpr_map = BTreeMap::new();
    for &level in tpr_levels {
        super::roc::fpr_at_tpr(&pop, level)?;
        fpr_map.insert(tpr_key(level), fpr_at_tpr_from_curve(&curve, level));
    }
    let rc = risk_coverage(scores, positive)?;
    let ece = match calibration {
        Some((probs, labels)) if !probs.is_empty() => Some(ece(probs, labels, DEFAULT_ECE_BINS)?),
        _ => None,
    };
    Ok(DetectionMetrics {
        fpr_at_tpr: fpr_map,
        auroc: auroc(&pop),
        aurc: rc.aurc,
        ece,
        roc_points: curve.iter().map(|p| [p.fpr, p.tpr]).collect(),
        rc_points: rc.points.iter().map(|p| [p.coverage, p.risk]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub tuning_size: usize,
    pub evaluation_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratified: Option<bool>,
}

/// One detector evaluated on one split, with enough provenance to
/// reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub config: DetectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub split: SplitInfo,
    pub n_positive: usize,
    pub n_negative: usize,
    pub source: String,
    pub metrics: DetectionMetrics,
    /// Method-specific echoes (conformal alpha, Rel-U fallback flag, ...).
    #[serde(default)]
    pub extras: BTreeMap<String, serde_json::Value>,
}

impl MetricsReport {
    /// Pretty JSON with keys in sorted order.
    pub fn to_canonical_json(&self) -> Result<String> {
        canonical_json(self)
    }
}

/// Serializes through `serde_json::Value`, whose maps are sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> MetricsReport {
        let scores = [0.1, 0.7, 0.2, 0.9, 0.3];
        let positive = [true, false, true, false, true];
        MetricsReport {
            method: Method::GiniDoctor,
            config: DetectorConfig::identity(Method::GiniDoctor),
            seed: Some(3),
            split: SplitInfo {
                tuning_size: 5,
                evaluation_size: 5,
                tuning_fraction: Some(0.5),
                stratified: Some(true),
            },
            n_positive: 3,
            n_negative: 2,
            source: "unit".into(),
            metrics: detection_metrics(&scores, &positive, None, &DEFAULT_TPR_LEVELS).unwrap(),
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn json_is_sorted_and_round_trips() {
        let r = report();
        let text = r.to_canonical_json().unwrap();
        assert_eq!(text, r.to_canonical_json().unwrap());
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let aurc_at = text.find("\"aurc\"").unwrap();
        let auroc_at = text.find("\"auroc\"").unwrap();
        assert!(aurc_at < auroc_at);
    }

    #[test]
    fn perfect_detector_numbers() {
        let m = &report().metrics;
        assert_eq!(m.auroc, 1.0);
        assert_eq!(m.fpr95(), 0.0);
        // Errors still cost risk once coverage passes the correct samples.
        assert_eq!(m.rc_points.last().unwrap(), &[1.0, 0.4]);
        assert!(m.aurc > 0.0);
    }
}
