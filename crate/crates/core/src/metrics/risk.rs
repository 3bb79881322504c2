use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub coverage: f64,
    pub risk: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCoverage {
    pub points: Vec<RiskCoveragePoint>,
    pub aurc: f64,
}

/// Selective-classification sweep: samples with score `<=` threshold are
/// accepted, risk is the error rate among them.
///
/// The area is the trapezoid rule over the sweep, with the curve extended
/// flat from coverage zero at the risk of the first accepted group. Without
/// that anchor a constant scorer would have zero area.
pub fn risk_coverage(scores: &[f64], correct: &[bool]) -> Result<RiskCoverage> {
    if scores.len() != correct.len() {
        return Err(Error::Input(format!(
            "{} scores but {} correctness flags",
            scores.len(),
            correct.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Degenerate("risk-coverage of an empty set".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite detection score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n = scores.len() as f64;

    let mut points = Vec::new();
    let (mut accepted, mut errors) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            accepted += 1;
            if !correct[order[k]] {
                errors += 1;
            }
            k += 1;
        }
        points.push(RiskCoveragePoint {
            coverage: accepted as f64 / n,
            risk: errors as f64 / accepted as f64,
            threshold: t,
        });
    }

    let first = points[0];
    let mut aurc = first.coverage * first.risk;
    for w in points.windows(2) {
        aurc += (w[1].coverage - w[0].coverage) * (w[1].risk + w[0].risk) / 2.0;
    }
    Ok(RiskCoverage { points, aurc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_correct_has_zero_risk() {
        let rc = risk_coverage(&[0.3, 0.1, 0.2], &[true; 3]).unwrap();
        assert!(rc.points.iter().all(|p| p.risk == 0.0));
        assert_eq!(rc.aurc, 0.0);
    }

    #[test]
    fn oracle_scorer_keeps_risk_zero_until_accuracy() {
        let correct = [true, false, true, true, false, true, true, true];
        let scores: Vec<f64> = correct.iter().map(|c| if *c { 0.0 } else { 1.0 }).collect();
        let rc = risk_coverage(&scores, &correct).unwrap();
        assert_eq!(rc.points[0].coverage, 0.75);
        assert_eq!(rc.points[0].risk, 0.0);
        assert_eq!(rc.points[1].risk, 0.25);
    }

    #[test]
    fn hand_sweep() {
        let rc = risk_coverage(&[0.1, 0.2, 0.3, 0.4], &[true, true, false, true]).unwrap();
        let got: Vec<(f64, f64)> = rc.points.iter().map(|p| (p.coverage, p.risk)).collect();
        assert_eq!(got, vec![(0.25, 0.0), (0.5, 0.0), (0.75, 1.0 / 3.0), (1.0, 0.25)]);
        // 0.25·(0 + 1/3)/2 + 0.25·(1/3 + 1/4)/2
        let expected = 0.25 * (1.0 / 3.0) / 2.0 + 0.25 * (1.0 / 3.0 + 0.25) / 2.0;
        assert!((rc.aurc - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_scorer_area_is_error_rate() {
        let rc = risk_coverage(&[0.5; 4], &[true, false, true, true]).unwrap();
        assert_eq!(rc.points.len(), 1);
        assert_eq!(rc.aurc, 0.25);
    }

    #[test]
    fn errors() {
        assert!(risk_coverage(&[], &[]).is_err());
        assert!(risk_coverage(&[0.1], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn oracle_has_smallest_area(
            rows in proptest::collection::vec((any::<bool>(), 0u8..20), 1..200)
        ) {
            let correct: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let other: Vec<f64> = rows.iter().map(|r| f64::from(r.1)).collect();
            let oracle: Vec<f64> = correct.iter().map(|c| if *c { 0.0 } else { 1.0 }).collect();
            let a = risk_coverage(&oracle, &correct).unwrap().aurc;
            let b = risk_coverage(&other, &correct).unwrap().aurc;
            prop_assert!(a <= b + 1e-12);
        }

        #[test]
        fn invariant_under_increasing_transform(
            rows in proptest::collection::vec((any::<bool>(), 0u8..20), 1..100)
        ) {
            let correct: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let s: Vec<f64> = rows.iter().map(|r| f64::from(r.1)).collect();
            let t: Vec<f64> = s.iter().map(|v| v.powi(3) + 2.0).collect();
            let a = risk_coverage(&s, &correct).unwrap();
            let b = risk_coverage(&t, &correct).unwrap();
            prop_assert_eq!(a.aurc, b.aurc);
            let pa: Vec<_> = a.points.iter().map(|p| (p.coverage, p.risk)).collect();
            let pb: Vec<_> = b.points.iter().map(|p| (p.coverage, p.risk)).collect();
            prop_assert_eq!(pa, pb);
        }
    }
}
