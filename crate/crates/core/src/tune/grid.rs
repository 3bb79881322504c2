//! Exhaustive hyperparameter search on a tuning split.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{check_lambda, DetectorConfig, Method};
use crate::error::{Error, Result};
use crate::lab::classifier::ClassifierModel;
use crate::metrics::report::detection_metrics;

use super::pipeline::{fit_detector, score_dataset, DetectorOptions, FittedDetector, Population};

/// TPR level of the selection metric.
pub const SELECTION_TPR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_temperatures() -> Vec<f64> {
    vec![0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 5.0]
}

fn default_epsilons() -> Vec<f64> {
    vec![0.0, 2e-4, 5e-4, 1e-3, 2e-3, 3.5e-3]
}

fn default_lambdas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            temperatures: default_temperatures(),
            epsilons: default_epsilons(),
            lambdas: default_lambdas(),
        }
    }
}

impl GridSpec {
    /// A grid holding exactly one cell.
    pub fn single(temperature: f64, epsilon: f64, lambda: f64) -> Self {
        Self {
            temperatures: vec![temperature],
            epsilons: vec![epsilon],
            lambdas: vec![lambda],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() || self.epsilons.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Parameter("every grid axis needs at least one value".into()));
        }
        for &l in &self.lambdas {
            check_lambda(l)?;
        }
        for &t in &self.temperatures {
            DetectorConfig::new(Method::GiniDoctor, t, 0.0, None)?;
        }
        for &e in &self.epsilons {
            DetectorConfig::new(Method::GiniDoctor, 1.0, e, None)?;
        }
        Ok(())
    }

    /// The configurations searched for `method`. Methods without
    /// hyperparameters get the identity configuration only.
    pub fn cells(&self, method: Method) -> Vec<DetectorConfig> {
        if !method.uses_temperature() {
            return vec![DetectorConfig::identity(method)];
        }
        let lambdas: Vec<Option<f64>> = if method.uses_lambda() {
            self.lambdas.iter().map(|&l| Some(l)).collect()
        } else {
            vec![None]
        };
        let mut cells = Vec::new();
        for &t in &self.temperatures {
            for &lambda in &lambdas {
                for &e in &self.epsilons {
                    cells.push(DetectorConfig {
                        temperature: t,
                        epsilon: e,
                        lambda,
                        ..DetectorConfig::identity(method)
                    });
                }
            }
        }
        cells
    }
}

/// One evaluated grid cell. Failed cells keep their error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: DetectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpr95: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: FittedDetector,
    pub best_fpr95: f64,
    pub cells: Vec<CellResult>,
}

/// Orders configurations by the least intervention: smaller ε, then T
/// closer to 1, then smaller λ. Remaining ties go to the smaller T.
pub fn tie_break(a: &DetectorConfig, b: &DetectorConfig) -> Ordering {
    a.epsilon
        .total_cmp(&b.epsilon)
        .then((a.temperature - 1.0).abs().total_cmp(&(b.temperature - 1.0).abs()))
        .then(a.lambda.unwrap_or(0.0).total_cmp(&b.lambda.unwrap_or(0.0)))
        .then(a.temperature.total_cmp(&b.temperature))
}

/// Selection metric of a fitted detector on a population.
pub fn selection_value(
    fitted: &FittedDetector,
    population: &Population,
    model: Option<&ClassifierModel>,
) -> Result<f64> {
    let scores = score_dataset(fitted, &population.dataset, model)?;
    let m = detection_metrics(&scores, &population.positive, None, &[SELECTION_TPR])?;
    Ok(m.fpr95())
}

/// Fits and scores every cell on `tuning` and keeps the one with the lowest
/// FPR at 95% TPR.
pub fn grid_search(
    method: Method,
    tuning: &Population,
    grid: &GridSpec,
    model: Option<&ClassifierModel>,
    options: &DetectorOptions,
) -> Result<GridResult> {
    grid.validate()?;
    let mut cells = Vec::new();
    let mut best: Option<(FittedDetector, f64)> = None;
    for config in grid.cells(method) {
        let outcome = fit_detector(&config, tuning, options)
            .and_then(|fitted| selection_value(&fitted, tuning, model).map(|v| (fitted, v)));
        match outcome {
            Ok((fitted, value)) => {
                cells.push(CellResult {
                    config: config.clone(),
                    fpr95: Some(value),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((b, bv)) => value < *bv || (value == *bv && tie_break(&config, &b.config).is_lt()),
                };
                if better {
                    best = Some((fitted, value));
                }
            }
            Err(e) => {
                log::warn!("{method} cell T={} eps={} lambda={:?} failed: {e}", config.temperature, config.epsilon, config.lambda);
                cells.push(CellResult {
                    config,
                    fpr95: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (best, best_fpr95) = best.ok_or_else(|| {
        let first = cells.first().and_then(|c| c.error.clone()).unwrap_or_default();
        Error::Degenerate(format!("every {method} grid cell failed (first error: {first})"))
    })?;
    Ok(GridResult {
        best,
        best_fpr95,
        cells,
    })
}
