//! Desk-scale models: synthetic data, small classifiers, input gradients
//! and the MLP detector baseline.

pub mod classifier;
pub mod detector;
pub mod gradient;
pub mod synth;

pub use classifier::{train_classifier, Architecture, ClassifierModel, ModelFile, TrainConfig, TrainSummary};
pub use detector::{train_mlp_detector, MlpDetector, MlpDetectorConfig};
pub use gradient::{finite_difference_gradient, input_gradient, perturb_input, Functional, ScoreKind};
pub use synth::{synth_generate, ConfusionPair, FeatureSet, SynthConfig, SynthSplits};
