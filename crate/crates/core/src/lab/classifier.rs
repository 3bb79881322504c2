//! Small softmax classifiers trained by full-batch gradient descent.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::synth::FeatureSet;
use crate::domain::{EvalDataset, EvalSample, LogitVector, ModelOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Architecture {
    LinearSoftmax,
    #[serde(rename = "MLP_1HIDDEN")]
    Mlp1Hidden { width: usize, activation: Activation },
}

impl Architecture {
    pub fn mlp(width: usize) -> Self {
        Architecture::Mlp1Hidden {
            width,
            activation: Activation::Relu,
        }
    }
}

/// `y = W x + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weights.dot(x) + &self.bias
    }

    fn apply_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub dim: usize,
    /// One layer for the linear model, two for the MLP.
    pub layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Hidden pre-activations (empty for the linear model).
    pub hidden_pre: Array1<f64>,
    pub logits: Array1<f64>,
}

impl ClassifierModel {
    /// Seeded initialization: zeros for the linear model (so an untrained
    /// model predicts class 0 everywhere), He-normal hidden weights and
    /// small output weights for the MLP.
    pub fn init(architecture: Architecture, dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if dim == 0 || num_classes < 2 {
            return Err(Error::Parameter(format!(
                "need dim ≥ 1 and at least 2 classes, got dim {dim}, {num_classes} classes"
            )));
        }
        let layers = match architecture {
            Architecture::LinearSoftmax => vec![Dense {
                weights: Array2::zeros((num_classes, dim)),
                bias: Array1::zeros(num_classes),
            }],
            Architecture::Mlp1Hidden { width, .. } => {
                if width == 0 {
                    return Err(Error::Parameter("hidden width must be at least 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let he = Normal::new(0.0, (2.0 / dim as f64).sqrt()).expect("positive scale");
                let out = Normal::new(0.0, (1.0 / width as f64).sqrt()).expect("positive scale");
                vec![
                    Dense {
                        weights: Array2::from_shape_simple_fn((width, dim), || he.sample(&mut rng)),
                        bias: Array1::zeros(width),
                    },
                    Dense {
                        weights: Array2::from_shape_simple_fn((num_classes, width), || out.sample(&mut rng)),
                        bias: Array1::zeros(num_classes),
                    },
                ]
            }
        };
        Ok(Self {
            architecture,
            num_classes,
            dim,
            layers,
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("feature {i} is not finite")));
        }
        Ok(())
    }

    pub fn trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let x = Array1::from(x.to_vec());
        let trace = match self.architecture {
            Architecture::LinearSoftmax => ForwardTrace {
                hidden_pre: Array1::zeros(0),
                logits: self.layers[0].apply(&x),
            },
            Architecture::Mlp1Hidden { .. } => {
                let pre = self.layers[0].apply(&x);
                let h = pre.mapv(relu);
                ForwardTrace {
                    logits: self.layers[1].apply(&h),
                    hidden_pre: pre,
                }
            }
        };
        if let Some(k) = trace.logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("logit {k} is not finite")));
        }
        Ok(trace)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.logits.to_vec())
    }

    /// Logits for every row of `x`.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.ncols(),
            });
        }
        let z = match self.architecture {
            Architecture::LinearSoftmax => self.layers[0].apply_batch(x),
            Architecture::Mlp1Hidden { .. } => self.layers[1].apply_batch(&self.layers[0].apply_batch(x).mapv(relu)),
        };
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("forward pass produced non-finite logits".into()));
        }
        Ok(z)
    }

    /// `∂F/∂x` given `∂F/∂z` at the point recorded in `trace`.
    pub fn backprop_input(&self, trace: &ForwardTrace, logit_grad: &Array1<f64>) -> Array1<f64> {
        match self.architecture {
            Architecture::LinearSoftmax => self.layers[0].weights.t().dot(logit_grad),
            Architecture::Mlp1Hidden { .. } => {
                let gh = self.layers[1].weights.t().dot(logit_grad);
                let ga = gh * trace.hidden_pre.mapv(|a| if a > 0.0 { 1.0 } else { 0.0 });
                self.layers[0].weights.t().dot(&ga)
            }
        }
    }

    /// Runs the model over a feature set. Sample ids are `id_offset + row`.
    pub fn infer(&self, data: &FeatureSet, id_offset: usize, source_tag: &str) -> Result<EvalDataset> {
        if data.num_classes != self.num_classes {
            return Err(Error::Input(format!(
                "model has {} classes but data has {}",
                self.num_classes, data.num_classes
            )));
        }
        let z = self.forward_batch(&data.features)?;
        let samples = z
            .rows()
            .into_iter()
            .zip(data.features.rows())
            .zip(&data.labels)
            .enumerate()
            .map(|(row, ((logits, x), &y))| {
                Ok(EvalSample::new(
                    id_offset + row,
                    Some(x.to_vec()),
                    ModelOutput::Logits(LogitVector::new(logits.to_vec())?),
                    y,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        EvalDataset::new(samples, self.num_classes, source_tag)
    }

    pub fn accuracy(&self, data: &FeatureSet) -> Result<f64> {
        let z = self.forward_batch(&data.features)?;
        let hits = z
            .rows()
            .into_iter()
            .zip(&data.labels)
            .filter(|(row, y)| crate::domain::first_argmax(row.as_slice().expect("row-major")) == **y)
            .count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }
}

fn relu(a: f64) -> f64 {
    a.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            momentum: default_momentum(),
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Training schedule used with [`SynthConfig::asymmetric_benchmark`].
    ///
    /// [`SynthConfig::asymmetric_benchmark`]: crate::lab::synth::SynthConfig::asymmetric_benchmark
    pub fn benchmark(seed: u64) -> Self {
        Self {
            epochs: 300,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    /// Mean cross-entropy of the returned model on the training set.
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Row-wise softmax and mean cross-entropy.
fn softmax_rows(z: &Array2<f64>, labels: &[usize]) -> (Array2<f64>, f64) {
    let mut p = z.clone();
    let mut loss = 0.0;
    for (mut row, &y) in p.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss += sum.ln() - row[y].ln();
        row /= sum;
    }
    (p, loss / labels.len() as f64)
}

/// Cross-entropy training with full-batch gradient descent and heavy-ball
/// momentum. Deterministic for a fixed configuration.
pub fn train_classifier(
    data: &FeatureSet,
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainSummary)> {
    if data.is_empty() {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    let mut counts = vec![0usize; data.num_classes];
    for &y in &data.labels {
        counts[y] += 1;
    }
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Degenerate(format!("class {k} has no training samples")));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::Parameter(format!("learning rate must be positive, got {}", config.learning_rate)));
    }
    if !(0.0..1.0).contains(&config.momentum) || config.weight_decay.is_nan() || config.weight_decay < 0.0 {
        return Err(Error::Parameter("momentum must lie in [0, 1) and weight decay be non-negative".into()));
    }

    let mut model = ClassifierModel::init(architecture, data.dim(), data.num_classes, config.seed)?;
    let n = data.len() as f64;
    let mut onehot = Array2::<f64>::zeros((data.len(), data.num_classes));
    for (i, &y) in data.labels.iter().enumerate() {
        onehot[[i, y]] = 1.0;
    }
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = model
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
        .collect();

    let x = &data.features;
    for epoch in 0..config.epochs {
        let (hidden, z) = match model.architecture {
            Architecture::LinearSoftmax => (None, model.layers[0].apply_batch(x)),
            Architecture::Mlp1Hidden { .. } => {
                let pre = model.layers[0].apply_batch(x);
                let h = pre.mapv(relu);
                let z = model.layers[1].apply_batch(&h);
                (Some((pre, h)), z)
            }
        };
        let (p, loss) = softmax_rows(&z, &data.labels);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training diverged at epoch {epoch}: loss {loss} (learning rate {})",
                config.learning_rate
            )));
        }
        let g = (p - &onehot) / n;
        let grads: Vec<(Array2<f64>, Array1<f64>)> = match &hidden {
            None => vec![(g.t().dot(x), g.sum_axis(Axis(0)))],
            Some((pre, h)) => {
                let gw2 = g.t().dot(h);
                let gb2 = g.sum_axis(Axis(0));
                let gh = g.dot(&model.layers[1].weights);
                let ga = gh * pre.mapv(|a| if a > 0.0 { 1.0 } else { 0.0 });
                vec![(ga.t().dot(x), ga.sum_axis(Axis(0))), (gw2, gb2)]
            }
        };
        for ((layer, (vw, vb)), (gw, gb)) in model.layers.iter_mut().zip(velocity.iter_mut()).zip(grads) {
            let gw = gw + &(&layer.weights * config.weight_decay);
            *vw = &*vw * config.momentum + &gw;
            *vb = &*vb * config.momentum + &gb;
            layer.weights.scaled_add(-config.learning_rate, vw);
            layer.bias.scaled_add(-config.learning_rate, vb);
        }
    }

    let z = model.forward_batch(x)?;
    let (_, final_loss) = softmax_rows(&z, &data.labels);
    if !final_loss.is_finite() {
        return Err(Error::Numerical(format!("training ended with loss {final_loss}")));
    }
    let train_accuracy = model.accuracy(data)?;
    log::debug!("trained {:?}: loss {final_loss:.6}, accuracy {train_accuracy:.4}", architecture);
    Ok((
        model,
        TrainSummary {
            epochs: config.epochs,
            final_loss,
            train_accuracy,
        },
    ))
}

/// Weight file layout: architecture tag, shapes, row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub dim: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub shape: [usize; 2],
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl ClassifierModel {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            architecture: self.architecture,
            num_classes: self.num_classes,
            dim: self.dim,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    shape: [l.weights.nrows(), l.weights.ncols()],
                    weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let expected: Vec<[usize; 2]> = match file.architecture {
            Architecture::LinearSoftmax => vec![[file.num_classes, file.dim]],
            Architecture::Mlp1Hidden { width, .. } => vec![[width, file.dim], [file.num_classes, width]],
        };
        if file.layers.len() != expected.len() {
            return Err(Error::Input(format!(
                "architecture needs {} layers, file has {}",
                expected.len(),
                file.layers.len()
            )));
        }
        let mut layers = Vec::new();
        for (k, (layer, shape)) in file.layers.iter().zip(expected).enumerate() {
            let ok = layer.shape == shape
                && layer.weights.len() == shape[0]
                && layer.weights.iter().all(|r| r.len() == shape[1])
                && layer.bias.len() == shape[0];
            if !ok {
                return Err(Error::Input(format!("layer {k}: expected shape {shape:?}")));
            }
            let flat: Vec<f64> = layer.weights.iter().flatten().copied().collect();
            if flat.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("layer {k}: non-finite weight")));
            }
            layers.push(Dense {
                weights: Array2::from_shape_vec((shape[0], shape[1]), flat).expect("shape checked"),
                bias: Array1::from(layer.bias.clone()),
            });
        }
        Ok(Self {
            architecture: file.architecture,
            num_classes: file.num_classes,
            dim: file.dim,
            layers,
        })
    }
}
