//! Binary MLP that predicts "this sample is an error" from a classifier's
//! output vector.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDetectorConfig {
    /// Hidden layer widths, ReLU after each.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![128]
}

fn default_epochs() -> usize {
    300
}

fn default_learning_rate() -> f64 {
    1e-2
}

impl Default for MlpDetectorConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorLayer {
    /// `out × in`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Trained detector. Inputs are standardized with the training mean and
/// spread before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDetector {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<DetectorLayer>,
}

struct Layer {
    w: Array2<f64>,
    b: Array1<f64>,
}

fn to_layers(file: &[DetectorLayer]) -> Vec<Layer> {
    file.iter()
        .map(|l| {
            let rows = l.weights.len();
            let cols = l.weights.first().map_or(0, Vec::len);
            Layer {
                w: Array2::from_shape_vec((rows, cols), l.weights.iter().flatten().copied().collect())
                    .expect("validated shape"),
                b: Array1::from(l.bias.clone()),
            }
        })
        .collect()
}

fn sigmoid(o: f64) -> f64 {
    if o >= 0.0 {
        1.0 / (1.0 + (-o).exp())
    } else {
        let e = o.exp();
        e / (1.0 + e)
    }
}

/// Forward pass; returns the activations entering each layer and the
/// pre-activations leaving it.
fn forward(layers: &[Layer], x: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let mut inputs = vec![x.clone()];
    let mut pres = Vec::with_capacity(layers.len());
    for (k, l) in layers.iter().enumerate() {
        let pre = inputs[k].dot(&l.w.t()) + &l.b;
        if k + 1 < layers.len() {
            inputs.push(pre.mapv(|a| a.max(0.0)));
        }
        pres.push(pre);
    }
    (inputs, pres)
}

fn to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: r.len(),
            });
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("detector input row {i}, column {j} is not finite")));
        }
        for (j, v) in r.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    Ok(x)
}

/// Trains on `inputs` with targets `is_error` by full-batch Adam on binary
/// cross-entropy.
pub fn train_mlp_detector(inputs: &[Vec<f64>], is_error: &[bool], config: &MlpDetectorConfig) -> Result<MlpDetector> {
    if inputs.len() != is_error.len() {
        return Err(Error::Input(format!("{} inputs but {} targets", inputs.len(), is_error.len())));
    }
    let n_err = is_error.iter().filter(|e| **e).count();
    if n_err == 0 || n_err == is_error.len() {
        return Err(Error::Degenerate(
            "detector training needs both correct and erroneous samples".into(),
        ));
    }
    if config.hidden.contains(&0) {
        return Err(Error::Parameter("hidden widths must be positive".into()));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::Parameter(format!("learning rate must be positive, got {}", config.learning_rate)));
    }
    let dim = inputs[0].len();
    let raw = to_matrix(inputs, dim)?;
    let n = raw.nrows() as f64;
    let mean = raw.mean_axis(Axis(0)).expect("nonempty");
    let scale = raw.var_axis(Axis(0), 0.0).mapv(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
    let x = (&raw - &mean) / &scale;
    let y: Array2<f64> = Array2::from_shape_fn((inputs.len(), 1), |(i, _)| if is_error[i] { 1.0 } else { 0.0 });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut widths = vec![dim];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut layers: Vec<Layer> = widths
        .windows(2)
        .map(|w| {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive scale");
            Layer {
                w: Array2::from_shape_simple_fn((w[1], w[0]), || normal.sample(&mut rng)),
                b: Array1::zeros(w[1]),
            }
        })
        .collect();

    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m: Vec<(Array2<f64>, Array1<f64>)> = layers
        .iter()
        .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
        .collect();
    let mut v = m.clone();
    for epoch in 0..config.epochs {
        let (acts, pres) = forward(&layers, &x);
        let out = pres.last().expect("output layer");
        let loss: f64 = out
            .iter()
            .zip(y.iter())
            .map(|(o, t)| o.max(0.0) + (-o.abs()).exp().ln_1p() - t * o)
            .sum::<f64>()
            / n;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("detector training diverged at epoch {epoch}")));
        }
        let mut delta = (out.mapv(sigmoid) - &y) / n;
        let t = (epoch + 1) as i32;
        for k in (0..layers.len()).rev() {
            let gw = delta.t().dot(&acts[k]) + &(&layers[k].w * config.weight_decay);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                delta = delta.dot(&layers[k].w) * pres[k - 1].mapv(|a| if a > 0.0 { 1.0 } else { 0.0 });
            }
            let (mw, mb) = &mut m[k];
            let (vw, vb) = &mut v[k];
            *mw = &*mw * b1 + &(&gw * (1.0 - b1));
            *mb = &*mb * b1 + &(&gb * (1.0 - b1));
            *vw = &*vw * b2 + &(gw.mapv(|g| g * g) * (1.0 - b2));
            *vb = &*vb * b2 + &(gb.mapv(|g| g * g) * (1.0 - b2));
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let lr = config.learning_rate;
            layers[k].w.zip_mut_with(&(mw.mapv(|a| a / c1) / (vw.mapv(|a| (a / c2).sqrt()) + eps)), |w, s| {
                *w -= lr * s
            });
            layers[k].b.zip_mut_with(&(mb.mapv(|a| a / c1) / (vb.mapv(|a| (a / c2).sqrt()) + eps)), |b, s| {
                *b -= lr * s
            });
        }
    }

    Ok(MlpDetector {
        input_mean: mean.to_vec(),
        input_scale: scale.to_vec(),
        layers: layers
            .iter()
            .map(|l| DetectorLayer {
                weights: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: l.b.to_vec(),
            })
            .collect(),
    })
}

impl MlpDetector {
    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        if self.input_scale.len() != width || self.layers.is_empty() {
            return Err(Error::Input("detector file has inconsistent input statistics".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.is_empty() || l.bias.len() != l.weights.len() || l.weights.iter().any(|r| r.len() != width) {
                return Err(Error::Input(format!("detector layer {k} has inconsistent shape")));
            }
            width = l.weights.len();
        }
        if width != 1 {
            return Err(Error::Input("detector must end in a single output".into()));
        }
        Ok(())
    }

    /// Error probabilities in `[0, 1]`, used as uncertainty scores.
    pub fn score_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.validate()?;
        let raw = to_matrix(inputs, self.input_dim())?;
        let x = (&raw - &Array1::from(self.input_mean.clone())) / &Array1::from(self.input_scale.clone());
        let layers = to_layers(&self.layers);
        let (_, pres) = forward(&layers, &x);
        Ok(pres.last().expect("output layer").iter().map(|&o| sigmoid(o)).collect())
    }

    pub fn score(&self, input: &[f64]) -> Result<f64> {
        Ok(self.score_batch(&[input.to_vec()])?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auroc, ScoredPopulation};
    use rand::Rng;

    fn blobs(n: usize, gap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut e = Vec::new();
        for i in 0..n {
            let err = i % 4 == 0;
            let shift = if err { gap } else { 0.0 };
            x.push((0..3).map(|_| normal.sample(&mut rng) + shift).collect());
            e.push(err);
        }
        (x, e)
    }

    fn detector_auroc(d: &MlpDetector, x: &[Vec<f64>], err: &[bool]) -> f64 {
        let scores = d.score_batch(x).unwrap();
        let correct: Vec<bool> = err.iter().map(|e| !e).collect();
        auroc(&ScoredPopulation::from_flags(&scores, &correct).unwrap())
    }

    fn small() -> MlpDetectorConfig {
        MlpDetectorConfig {
            hidden: vec![32],
            epochs: 200,
            ..MlpDetectorConfig::default()
        }
    }

    #[test]
    fn separable_errors_are_found() {
        let (x, e) = blobs(400, 8.0, 1);
        let (vx, ve) = blobs(400, 8.0, 2);
        let d = train_mlp_detector(&x, &e, &small()).unwrap();
        assert!(detector_auroc(&d, &vx, &ve) >= 0.99);
    }

    #[test]
    fn shuffled_labels_give_chance() {
        let (x, _) = blobs(1000, 0.0, 3);
        let (tx, _) = blobs(4000, 0.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.3)).collect();
        let te: Vec<bool> = (0..4000).map(|_| rng.random_bool(0.3)).collect();
        let d = train_mlp_detector(&x, &e, &small()).unwrap();
        let a = detector_auroc(&d, &tx, &te);
        assert!((a - 0.5).abs() <= 0.05, "AUROC {a}");
    }

    #[test]
    fn deterministic_and_serializable() {
        let (x, e) = blobs(100, 2.0, 6);
        let a = train_mlp_detector(&x, &e, &small()).unwrap();
        let b = train_mlp_detector(&x, &e, &small()).unwrap();
        assert_eq!(a, b);
        let back: MlpDetector = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a.score_batch(&x).unwrap(), back.score_batch(&x).unwrap());
        assert!(a.score_batch(&x).unwrap().iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn single_class_is_degenerate() {
        let (x, _) = blobs(10, 0.0, 7);
        assert!(matches!(
            train_mlp_detector(&x, &[false; 10], &small()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn two_hidden_layers_train() {
        let (x, e) = blobs(200, 6.0, 8);
        let cfg = MlpDetectorConfig {
            hidden: vec![16, 16],
            ..small()
        };
        let d = train_mlp_detector(&x, &e, &cfg).unwrap();
        assert_eq!(d.layers.len(), 3);
        assert!(detector_auroc(&d, &x, &e) >= 0.99);
    }
}
