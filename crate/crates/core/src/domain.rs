//! Shared domain types and the temperature-scaled softmax.
//!
//! Class labels are 0-based everywhere in the library and in every file
//! format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a probability vector's sum from one.
pub const PROB_TOLERANCE: f64 = 1e-9;
/// Loaded probability rows within this distance of one are renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A categorical distribution over `C >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::check_entries(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::Input(format!(
                "probabilities sum to {sum}, expected 1 within {PROB_TOLERANCE}"
            )));
        }
        Ok(Self(probs))
    }

    /// Accepts rows read from disk: exact rows pass through untouched, rows
    /// off by at most [`RENORMALIZE_TOLERANCE`] are renormalized.
    pub fn from_loaded(probs: Vec<f64>) -> Result<Self> {
        Self::check_entries(&probs)?;
        let sum: f64 = probs.iter().sum();
        let gap = (sum - 1.0).abs();
        if gap <= PROB_TOLERANCE {
            Ok(Self(probs))
        } else if gap <= RENORMALIZE_TOLERANCE {
            Ok(Self(probs.into_iter().map(|p| p / sum).collect()))
        } else {
            Err(Error::Input(format!(
                "probability row sums to {sum}; more than {RENORMALIZE_TOLERANCE} away from 1"
            )))
        }
    }

    fn check_entries(probs: &[f64]) -> Result<()> {
        if probs.len() < 2 {
            return Err(Error::Input(format!(
                "a probability vector needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0 + PROB_TOLERANCE)
        {
            return Err(Error::Input(format!("probability entry {i} = {p} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::Input(format!("class {class} out of range for C={num_classes}")));
        }
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Self::new(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    /// Lowest index attaining the maximum.
    pub fn argmax(&self) -> usize {
        first_argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Rescales the distribution as if its log-probabilities were logits
    /// divided by `temperature`. `T = 1` returns an exact copy.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        if temperature == 1.0 {
            return Ok(self.clone());
        }
        let scaled: Vec<f64> = self.0.iter().map(|p| p.ln() / temperature).collect();
        Ok(Self(stable_softmax(&scaled)))
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(value: ProbVector) -> Self {
        value.0
    }
}

/// Raw, finite classifier outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Input("empty logit vector".into()));
        }
        if let Some((i, z)) = logits.iter().enumerate().find(|(_, z)| !z.is_finite()) {
            return Err(Error::Input(format!("logit {i} is not finite ({z})")));
        }
        Ok(Self(logits))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(value: LogitVector) -> Self {
        value.0
    }
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("temperature must be positive, got {temperature}")))
    }
}

pub(crate) fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax with max-subtraction. Entries equal to `-inf` map to zero.
pub(crate) fn stable_softmax(scaled: &[f64]) -> Vec<f64> {
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `softmax(z / T)`.
pub fn softmax_with_temperature(logits: &LogitVector, temperature: f64) -> Result<ProbVector> {
    check_temperature(temperature)?;
    if logits.len() < 2 {
        return Err(Error::Input("softmax needs at least 2 classes".into()));
    }
    let scaled: Vec<f64> = logits.as_slice().iter().map(|z| z / temperature).collect();
    Ok(ProbVector(stable_softmax(&scaled)))
}

/// Predicted class; ties go to the lowest index.
pub fn argmax_predict(logits: &[f64]) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::Input("cannot take argmax of an empty vector".into()));
    }
    Ok(first_argmax(logits))
}

/// What a classifier emitted for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOutput {
    Logits(LogitVector),
    /// Already-normalized probabilities; softmax is bypassed.
    Probs(ProbVector),
}

impl ModelOutput {
    pub fn probs(&self, temperature: f64) -> Result<ProbVector> {
        match self {
            ModelOutput::Logits(z) => softmax_with_temperature(z, temperature),
            ModelOutput::Probs(p) => p.with_temperature(temperature),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            ModelOutput::Logits(z) => z.as_slice(),
            ModelOutput::Probs(p) => p.as_slice(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.values().len()
    }

    pub fn predicted(&self) -> usize {
        first_argmax(self.values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    /// Row index in the originating file or generated split.
    pub id: usize,
    pub features: Option<Vec<f64>>,
    pub output: ModelOutput,
    pub true_label: usize,
    pub predicted_label: usize,
    pub correct: bool,
}

impl EvalSample {
    pub fn new(id: usize, features: Option<Vec<f64>>, output: ModelOutput, true_label: usize) -> Self {
        let predicted_label = output.predicted();
        Self {
            id,
            features,
            output,
            true_label,
            predicted_label,
            correct: predicted_label == true_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDataset {
    pub samples: Vec<EvalSample>,
    pub num_classes: usize,
    pub source_tag: String,
}

impl EvalDataset {
    pub fn new(samples: Vec<EvalSample>, num_classes: usize, source_tag: impl Into<String>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Input(format!("need at least 2 classes, got {num_classes}")));
        }
        for (row, s) in samples.iter().enumerate() {
            if s.output.num_classes() != num_classes {
                return Err(Error::Input(format!(
                    "row {row}: {} outputs for a {num_classes}-class dataset",
                    s.output.num_classes()
                )));
            }
            if s.true_label >= num_classes {
                return Err(Error::Input(format!(
                    "row {row}: label {} out of range [0, {num_classes})",
                    s.true_label
                )));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            source_tag: source_tag.into(),
        })
    }

    /// Builds a dataset from row-aligned logits (or probabilities) and labels.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        labels: &[usize],
        features: Option<Vec<Vec<f64>>>,
        are_probs: bool,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} output rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::Degenerate("dataset has no samples".into()));
        }
        if let Some(f) = &features {
            if f.len() != rows.len() {
                return Err(Error::Input(format!(
                    "{} feature rows but {} output rows",
                    f.len(),
                    rows.len()
                )));
            }
        }
        let num_classes = rows[0].len();
        let mut features = features.map(|f| f.into_iter());
        let mut samples = Vec::with_capacity(rows.len());
        for (id, (row, &label)) in rows.into_iter().zip(labels).enumerate() {
            let output = if are_probs {
                ModelOutput::Probs(
                    ProbVector::from_loaded(row).map_err(|e| Error::Input(format!("row {id}: {e}")))?,
                )
            } else {
                ModelOutput::Logits(LogitVector::new(row).map_err(|e| Error::Input(format!("row {id}: {e}")))?)
            };
            let x = features.as_mut().and_then(|it| it.next());
            samples.push(EvalSample::new(id, x, output, label));
        }
        Self::new(samples, num_classes, source_tag)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn correct_flags(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.correct).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.true_label).collect()
    }

    pub fn accuracy(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.correct).count() as f64 / self.samples.len() as f64
    }

    pub fn has_features(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.features.is_some())
    }

    /// Samples at the given positions, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            samples: positions.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
            source_tag: self.source_tag.clone(),
        }
    }

    /// Probability vectors at temperature `T`, in sample order.
    pub fn probs(&self, temperature: f64) -> Result<Vec<ProbVector>> {
        self.samples.iter().map(|s| s.output.probs(temperature)).collect()
    }
}

/// Detection methods. All scores are oriented so that a higher value
/// means "more likely an error".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Msp,
    Entropy,
    GiniDoctor,
    Odin,
    RelU,
    Mlp,
    Conformal,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Msp,
        Method::Entropy,
        Method::GiniDoctor,
        Method::Odin,
        Method::RelU,
        Method::Mlp,
        Method::Conformal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Msp => "MSP",
            Method::Entropy => "ENTROPY",
            Method::GiniDoctor => "GINI_DOCTOR",
            Method::Odin => "ODIN",
            Method::RelU => "REL_U",
            Method::Mlp => "MLP",
            Method::Conformal => "CONFORMAL",
        }
    }

    pub fn uses_temperature(self) -> bool {
        matches!(self, Method::GiniDoctor | Method::Odin | Method::RelU)
    }

    pub fn uses_perturbation(self) -> bool {
        matches!(self, Method::GiniDoctor | Method::Odin | Method::RelU)
    }

    pub fn uses_lambda(self) -> bool {
        self == Method::RelU
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Ok(match key.as_str() {
            "msp" => Method::Msp,
            "entropy" => Method::Entropy,
            "ginidoctor" | "doctor" | "gini" => Method::GiniDoctor,
            "odin" => Method::Odin,
            "relu" => Method::RelU,
            "mlp" => Method::Mlp,
            "conformal" => Method::Conformal,
            _ => return Err(Error::Parameter(format!("unknown method '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Orientation {
    #[default]
    UncertaintyHighMeansError,
}

/// A method plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub method: Method,
    pub temperature: f64,
    pub epsilon: f64,
    /// Only meaningful for Rel-U.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub orientation: Orientation,
}

impl DetectorConfig {
    pub fn new(method: Method, temperature: f64, epsilon: f64, lambda: Option<f64>) -> Result<Self> {
        let config = Self {
            method,
            temperature,
            epsilon,
            lambda,
            orientation: Orientation::UncertaintyHighMeansError,
        };
        config.validate()?;
        Ok(config)
    }

    /// `T = 1`, `ε = 0`, no λ.
    pub fn identity(method: Method) -> Self {
        Self {
            method,
            temperature: 1.0,
            epsilon: 0.0,
            lambda: None,
            orientation: Orientation::UncertaintyHighMeansError,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Parameter(format!(
                "perturbation magnitude must be non-negative, got {}",
                self.epsilon
            )));
        }
        if let Some(l) = self.lambda {
            check_lambda(l)?;
        }
        Ok(())
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}
