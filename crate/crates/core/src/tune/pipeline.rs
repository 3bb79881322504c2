//! Fitting, scoring and evaluating one detector configuration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_calibrate, conformal_reject_score, ConformalCalibration, DEFAULT_ALPHA};
use crate::domain::{softmax_with_temperature, DetectorConfig, EvalDataset, EvalSample, LogitVector, Method, ProbVector};
use crate::error::{Error, Result};
use crate::lab::classifier::ClassifierModel;
use crate::lab::detector::{train_mlp_detector, MlpDetector, MlpDetectorConfig};
use crate::lab::gradient::{perturb_input, Functional};
use crate::metrics::report::{detection_metrics, MetricsReport, SplitInfo, DEFAULT_TPR_LEVELS};
use crate::observer::{fit_d_matrix, GroupedProbs, GroupingMode, RelUMatrix, RelUMatrixFile, DEFAULT_NORM_BUDGET};
use crate::scores::{gini_score, msp_uncertainty, rel_u_score, shannon_entropy};

/// Samples with their positive/negative assignment. `labelled` marks the
/// samples whose labels refer to the classifier's label space (all of
/// them in the matched setting, only the primary ones in a mismatch run).
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub dataset: EvalDataset,
    pub positive: Vec<bool>,
    pub labelled: Vec<bool>,
    pub mode: GroupingMode,
}

impl Population {
    /// Correct predictions are positives.
    pub fn matched(dataset: EvalDataset) -> Self {
        let positive = dataset.correct_flags();
        let labelled = vec![true; dataset.len()];
        Self {
            dataset,
            positive,
            labelled,
            mode: GroupingMode::Correctness,
        }
    }

    /// Primary samples are positives. Secondary ids are shifted past the
    /// largest primary id so that ids stay unique.
    pub fn mismatch(primary: &EvalDataset, secondary: &EvalDataset) -> Result<Self> {
        if primary.num_classes != secondary.num_classes {
            return Err(Error::Dimension {
                expected: primary.num_classes,
                actual: secondary.num_classes,
            });
        }
        let offset = primary.samples.iter().map(|s| s.id + 1).max().unwrap_or(0);
        let mut samples = primary.samples.clone();
        samples.extend(secondary.samples.iter().map(|s| EvalSample {
            id: s.id + offset,
            ..s.clone()
        }));
        let mut positive = vec![true; primary.len()];
        positive.resize(primary.len() + secondary.len(), false);
        let dataset = EvalDataset::new(
            samples,
            primary.num_classes,
            format!("{}+{}", primary.source_tag, secondary.source_tag),
        )?;
        Ok(Self {
            dataset,
            labelled: positive.clone(),
            positive,
            mode: GroupingMode::Membership,
        })
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            dataset: self.dataset.subset(positions),
            positive: positions.iter().map(|&i| self.positive[i]).collect(),
            labelled: positions.iter().map(|&i| self.labelled[i]).collect(),
            mode: self.mode,
        }
    }

    pub fn n_positive(&self) -> usize {
        self.positive.iter().filter(|p| **p).count()
    }

    pub fn n_negative(&self) -> usize {
        self.len() - self.n_positive()
    }
}

/// Settings shared by every detector fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOptions {
    #[serde(default = "default_norm_budget")]
    pub norm_budget: f64,
    #[serde(default = "default_alpha")]
    pub conformal_alpha: f64,
    #[serde(default)]
    pub mlp: MlpDetectorConfig,
    #[serde(default = "default_levels")]
    pub tpr_levels: Vec<f64>,
}

fn default_norm_budget() -> f64 {
    DEFAULT_NORM_BUDGET
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_levels() -> Vec<f64> {
    DEFAULT_TPR_LEVELS.to_vec()
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            norm_budget: default_norm_budget(),
            conformal_alpha: default_alpha(),
            mlp: MlpDetectorConfig::default(),
            tpr_levels: default_levels(),
        }
    }
}

/// What a method learns from the tuning split.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    None,
    RelU(RelUMatrix),
    Mlp(MlpDetector),
    Conformal(ConformalCalibration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedDetector {
    pub config: DetectorConfig,
    pub artifact: Artifact,
    /// Sorted ids of the samples the artifact was fitted on.
    pub fit_ids: Vec<usize>,
    /// Source tag of the tuning data.
    pub source: String,
}

/// JSON layout of a fitted detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorFile {
    pub config: DetectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<RelUMatrixFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpDetector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal: Option<ConformalCalibration>,
    pub fit_ids: Vec<usize>,
    #[serde(default)]
    pub source: String,
}

impl FittedDetector {
    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn to_file(&self) -> DetectorFile {
        let mut file = DetectorFile {
            config: self.config.clone(),
            observer: None,
            mlp: None,
            conformal: None,
            fit_ids: self.fit_ids.clone(),
            source: self.source.clone(),
        };
        match &self.artifact {
            Artifact::None => {}
            Artifact::RelU(d) => file.observer = Some(d.to_file(true, None)),
            Artifact::Mlp(m) => file.mlp = Some(m.clone()),
            Artifact::Conformal(c) => file.conformal = Some(c.clone()),
        }
        file
    }

    pub fn from_file(file: &DetectorFile) -> Result<Self> {
        file.config.validate()?;
        let artifact = match file.config.method {
            Method::RelU => Artifact::RelU(RelUMatrix::from_file(
                file.observer
                    .as_ref()
                    .ok_or_else(|| Error::Input("Rel-U detector file has no observer matrix".into()))?,
                None,
            )?),
            Method::Mlp => {
                let m = file
                    .mlp
                    .clone()
                    .ok_or_else(|| Error::Input("MLP detector file has no network".into()))?;
                m.validate()?;
                Artifact::Mlp(m)
            }
            Method::Conformal => Artifact::Conformal(
                file.conformal
                    .clone()
                    .ok_or_else(|| Error::Input("conformal detector file has no calibration".into()))?,
            ),
            _ => Artifact::None,
        };
        Ok(Self {
            config: file.config.clone(),
            artifact,
            fit_ids: file.fit_ids.clone(),
            source: file.source.clone(),
        })
    }

    /// Method-specific values echoed into reports.
    pub fn extras(&self) -> BTreeMap<String, serde_json::Value> {
        let mut extras = BTreeMap::new();
        match &self.artifact {
            Artifact::RelU(d) => {
                extras.insert("fallback".into(), d.is_fallback().into());
                extras.insert("lambda_used".into(), d.lambda_used().into());
                extras.insert("norm_budget".into(), d.norm_budget().into());
            }
            Artifact::Conformal(c) => {
                extras.insert("alpha".into(), c.alpha.into());
                extras.insert("qhat".into(), c.qhat.into());
            }
            Artifact::Mlp(m) => {
                let widths: Vec<usize> = m.layers.iter().map(|l| l.weights.len()).collect();
                extras.insert("layer_widths".into(), serde_json::json!(widths));
            }
            Artifact::None => {}
        }
        extras
    }
}

/// Probabilities at the configured temperature. With `ε > 0` every sample
/// is first perturbed along the method's score and re-run through the
/// model.
pub fn detector_probs(
    dataset: &EvalDataset,
    config: &DetectorConfig,
    functional: Option<&Functional>,
    model: Option<&ClassifierModel>,
) -> Result<Vec<ProbVector>> {
    let functional = match functional {
        Some(f) if config.epsilon > 0.0 => f,
        _ => return dataset.probs(config.temperature),
    };
    let model = model.ok_or_else(|| {
        Error::Input(format!(
            "perturbation (epsilon {}) needs the classifier model",
            config.epsilon
        ))
    })?;
    dataset
        .samples
        .iter()
        .map(|s| {
            let x = s.features.as_ref().ok_or_else(|| {
                Error::Input(format!("sample {} has no features to perturb", s.id))
            })?;
            let x = perturb_input(model, x, config.epsilon, functional)?;
            softmax_with_temperature(&LogitVector::new(model.forward(&x)?)?, config.temperature)
        })
        .collect()
}

fn perturbation_functional(fitted: &FittedDetector) -> Result<Option<Functional>> {
    let relu = match &fitted.artifact {
        Artifact::RelU(d) => Some(d),
        _ => None,
    };
    Functional::for_method(fitted.method(), fitted.config.temperature, relu)
}

/// Fits the method's artifact on a tuning population. Rel-U learns its
/// matrix from unperturbed probabilities at the configured temperature.
pub fn fit_detector(
    config: &DetectorConfig,
    tuning: &Population,
    options: &DetectorOptions,
) -> Result<FittedDetector> {
    config.validate()?;
    let ds = &tuning.dataset;
    let artifact = match config.method {
        Method::RelU => {
            let groups = GroupedProbs::from_flags(ds.probs(config.temperature)?, &tuning.positive)?;
            let lambda = config.lambda.unwrap_or_else(|| groups.balanced_lambda());
            Artifact::RelU(fit_d_matrix(&groups, lambda, options.norm_budget)?)
        }
        Method::Mlp => {
            let inputs: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.output.values().to_vec()).collect();
            let is_error: Vec<bool> = tuning.positive.iter().map(|p| !p).collect();
            Artifact::Mlp(train_mlp_detector(&inputs, &is_error, &options.mlp)?)
        }
        Method::Conformal => {
            let mut probs = Vec::new();
            let mut labels = Vec::new();
            for (i, s) in ds.samples.iter().enumerate() {
                if tuning.labelled[i] && (tuning.mode == GroupingMode::Correctness || tuning.positive[i]) {
                    probs.push(s.output.probs(config.temperature)?);
                    labels.push(s.true_label);
                }
            }
            Artifact::Conformal(conformal_calibrate(&probs, &labels, options.conformal_alpha)?)
        }
        _ => Artifact::None,
    };
    let mut fit_ids = ds.ids();
    fit_ids.sort_unstable();
    Ok(FittedDetector {
        config: config.clone(),
        artifact,
        fit_ids,
        source: ds.source_tag.clone(),
    })
}

/// Uncertainty scores, higher meaning more likely an error.
pub fn score_dataset(fitted: &FittedDetector, dataset: &EvalDataset, model: Option<&ClassifierModel>) -> Result<Vec<f64>> {
    let method = fitted.method();
    if let Artifact::Mlp(m) = &fitted.artifact {
        let inputs: Vec<Vec<f64>> = dataset.samples.iter().map(|s| s.output.values().to_vec()).collect();
        return m.score_batch(&inputs);
    }
    let functional = perturbation_functional(fitted)?;
    let probs = detector_probs(dataset, &fitted.config, functional.as_ref(), model)?;
    let scores = match (method, &fitted.artifact) {
        (Method::Msp | Method::Odin, _) => probs.iter().map(msp_uncertainty).collect(),
        (Method::Entropy, _) => probs.iter().map(shannon_entropy).collect(),
        (Method::GiniDoctor, _) => probs.iter().map(gini_score).collect(),
        (Method::RelU, Artifact::RelU(d)) => probs.iter().map(|p| rel_u_score(p, d)).collect::<Result<_>>()?,
        (Method::Conformal, Artifact::Conformal(c)) => probs.iter().map(|p| conformal_reject_score(p, c)).collect(),
        (m, _) => return Err(Error::Input(format!("detector for {m} is missing its fitted artifact"))),
    };
    Ok(scores)
}

/// Refuses to evaluate on any sample the detector was fitted on.
pub fn check_disjoint(fit_ids: &[usize], dataset: &EvalDataset) -> Result<()> {
    let fit: BTreeSet<usize> = fit_ids.iter().copied().collect();
    if let Some(s) = dataset.samples.iter().find(|s| fit.contains(&s.id)) {
        return Err(Error::Protocol(format!(
            "sample {} is in both the tuning and the evaluation split",
            s.id
        )));
    }
    Ok(())
}

/// Scores an evaluation population and computes every metric. Nothing is
/// refitted here.
pub fn evaluate_detector(
    fitted: &FittedDetector,
    evaluation: &Population,
    model: Option<&ClassifierModel>,
    options: &DetectorOptions,
    split: SplitInfo,
    seed: Option<u64>,
) -> Result<MetricsReport> {
    check_disjoint(&fitted.fit_ids, &evaluation.dataset)?;
    let scores = score_dataset(fitted, &evaluation.dataset, model)?;
    metrics_from_scores(fitted, evaluation, &scores, options, split, seed)
}

/// Builds the report for precomputed scores.
pub fn metrics_from_scores(
    fitted: &FittedDetector,
    evaluation: &Population,
    scores: &[f64],
    options: &DetectorOptions,
    split: SplitInfo,
    seed: Option<u64>,
) -> Result<MetricsReport> {
    let ds = &evaluation.dataset;
    let mut cal_probs = Vec::new();
    let mut cal_labels = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        if evaluation.labelled[i] {
            cal_probs.push(s.output.probs(fitted.config.temperature)?);
            cal_labels.push(s.true_label);
        }
    }
    let calibration = (!cal_probs.is_empty()).then_some((cal_probs.as_slice(), cal_labels.as_slice()));
    let metrics = detection_metrics(scores, &evaluation.positive, calibration, &options.tpr_levels)?;
    Ok(MetricsReport {
        method: fitted.method(),
        config: fitted.config.clone(),
        seed,
        split,
        n_positive: evaluation.n_positive(),
        n_negative: evaluation.n_negative(),
        source: ds.source_tag.clone(),
        metrics,
        extras: fitted.extras(),
    })
}
