//! Learned relative-uncertainty scores for detecting misclassified and
//! mismatched inputs from a classifier's soft predictions.

pub mod domain;
pub mod conformal;
pub mod error;
pub mod io;
pub mod lab;
pub mod metrics;
pub mod observer;
pub mod scores;
pub mod tune;

pub use domain::{
    argmax_predict, softmax_with_temperature, DetectorConfig, EvalDataset, EvalSample, LogitVector, Method,
    ModelOutput, ProbVector,
};
pub use error::{Error, Result};
pub use observer::{fit_d_matrix, GroupedProbs, RelUMatrix};
