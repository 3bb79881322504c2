//! Experiment definition files and the data they point at.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::EvalDataset;
use crate::error::{Error, Result};
use crate::lab::classifier::{train_classifier, Architecture, ClassifierModel, ModelFile, TrainConfig};
use crate::lab::synth::{synth_generate, FeatureSet, SynthConfig};
use crate::tune::{run_experiment, ExperimentKind, ExperimentResult, Protocol};

use super::matrix::{load_labels, load_matrix};
use super::report::read_json;

/// Where a dataset comes from: generated and passed through a freshly
/// trained classifier, or files on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSpec {
    Synth {
        synth: SynthConfig,
        #[serde(default = "default_architecture")]
        architecture: Architecture,
        #[serde(default)]
        train: Option<TrainConfig>,
    },
    Files {
        labels: PathBuf,
        /// Logits, or probabilities when `probabilities` is set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outputs: Option<PathBuf>,
        #[serde(default)]
        probabilities: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
    },
}

fn default_architecture() -> Architecture {
    Architecture::LinearSoftmax
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    /// Second population for mismatch runs. A synth secondary reuses the
    /// primary's classifier and only its test split is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<DataSpec>,
    pub protocol: Protocol,
}

impl ExperimentConfig {
    /// Matched run of MSP, ODIN, Doctor and Rel-U on the built-in
    /// asymmetric-confusion benchmark.
    pub fn asymmetric_benchmark(generator_seed: u64) -> Self {
        Self {
            data: DataSpec::Synth {
                synth: SynthConfig::asymmetric_benchmark(generator_seed),
                architecture: Architecture::LinearSoftmax,
                train: Some(TrainConfig::benchmark(0)),
            },
            secondary: None,
            protocol: Protocol::new(ExperimentKind::Matched),
        }
    }
}

/// A dataset with features, labels and optionally the model that scores it.
pub struct LoadedData {
    pub dataset: EvalDataset,
    pub model: Option<ClassifierModel>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    ClassifierModel::from_file(&read_json::<ModelFile>(path)?)
}

/// Features and labels written by `synth` (labels range-checked only
/// against the given class count).
pub fn load_features(features: &Path, labels: &Path, num_classes: Option<usize>) -> Result<FeatureSet> {
    let x = load_matrix(features)?;
    let y = load_labels(labels, num_classes)?;
    let c = num_classes.unwrap_or_else(|| y.iter().max().map_or(0, |m| m + 1));
    FeatureSet::new(x, y, c)
}

/// Builds an evaluation dataset from files. Outputs are read from
/// `outputs` when given, otherwise computed by running `model` on
/// `features`. Sample ids are row numbers.
pub fn load_dataset(
    outputs: Option<&Path>,
    labels: &Path,
    probabilities: bool,
    features: Option<&Path>,
    model: Option<&ClassifierModel>,
) -> Result<EvalDataset> {
    let x = features.map(load_matrix).transpose()?;
    let rows: Vec<Vec<f64>> = match (outputs, model, &x) {
        (Some(p), _, _) => load_matrix(p)?.rows().into_iter().map(|r| r.to_vec()).collect(),
        (None, Some(m), Some(x)) => m.forward_batch(x)?.rows().into_iter().map(|r| r.to_vec()).collect(),
        _ => {
            return Err(Error::Parameter(
                "a dataset needs an outputs file, or features together with a model".into(),
            ))
        }
    };
    let num_classes = rows.first().map_or(0, Vec::len);
    let y = load_labels(labels, Some(num_classes))?;
    let tag = stem(outputs.or(features).unwrap_or(labels));
    let feature_rows = x.map(|x| x.rows().into_iter().map(|r| r.to_vec()).collect());
    if let (Some(m), Some(f)) = (model, &feature_rows) {
        let f: &Vec<Vec<f64>> = f;
        if f.first().is_some_and(|r| r.len() != m.dim) {
            return Err(Error::Dimension {
                expected: m.dim,
                actual: f[0].len(),
            });
        }
    }
    EvalDataset::from_rows(rows, &y, feature_rows, probabilities, tag)
}

/// Resolves a data spec. A synth spec trains its own classifier unless one
/// is supplied (the mismatch secondary reuses the primary's).
pub fn prepare_data(spec: &DataSpec, base: &Path, reuse: Option<&ClassifierModel>) -> Result<LoadedData> {
    match spec {
        DataSpec::Synth {
            synth,
            architecture,
            train,
        } => {
            let splits = synth_generate(synth)?;
            let model = match reuse {
                Some(m) => m.clone(),
                None => {
                    let cfg = (*train).unwrap_or_default();
                    train_classifier(&splits.train, *architecture, &cfg)?.0
                }
            };
            let dataset = model.infer(&splits.test, 0, &format!("synth-{}", synth.seed))?;
            Ok(LoadedData {
                dataset,
                model: Some(model),
            })
        }
        DataSpec::Files {
            labels,
            outputs,
            probabilities,
            features,
            model,
        } => {
            let model = match (model, reuse) {
                (Some(p), _) => Some(load_model(&resolve(base, p))?),
                (None, Some(m)) => Some(m.clone()),
                (None, None) => None,
            };
            let dataset = load_dataset(
                outputs.as_ref().map(|p| resolve(base, p)).as_deref(),
                &resolve(base, labels),
                *probabilities,
                features.as_ref().map(|p| resolve(base, p)).as_deref(),
                model.as_ref(),
            )?;
            Ok(LoadedData { dataset, model })
        }
    }
}

/// Loads the data a config names and runs it. Relative paths are taken
/// from `base`.
pub fn run_config(config: &ExperimentConfig, base: &Path) -> Result<ExperimentResult> {
    let primary = prepare_data(&config.data, base, None)?;
    let secondary = match (&config.secondary, config.protocol.kind) {
        (Some(spec), _) => Some(prepare_data(spec, base, primary.model.as_ref())?),
        (None, ExperimentKind::Mismatch) => {
            return Err(Error::Parameter("mismatch experiment config has no secondary data".into()))
        }
        (None, _) => None,
    };
    run_experiment(
        primary.model.as_ref(),
        &primary.dataset,
        secondary.as_ref().map(|s| &s.dataset),
        &config.protocol,
    )
}
