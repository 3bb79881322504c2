//! Input gradients of score functionals and the signed-gradient input
//! perturbation.

use ndarray::{Array1, Array2};

use super::classifier::ClassifierModel;
use crate::domain::{check_temperature, first_argmax, stable_softmax, Method};
use crate::error::{Error, Result};
use crate::observer::RelUMatrix;

/// Lower clamp applied to a score before taking its logarithm.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreKind {
    MspConfidence,
    Gini,
    Entropy,
    /// `p D pᵀ`.
    Bilinear(Array2<f64>),
}

impl ScoreKind {
    fn value(&self, p: &[f64]) -> f64 {
        match self {
            ScoreKind::MspConfidence => p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ScoreKind::Gini => 1.0 - p.iter().map(|v| v * v).sum::<f64>(),
            ScoreKind::Entropy => -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>(),
            ScoreKind::Bilinear(d) => {
                let p = Array1::from(p.to_vec());
                p.dot(&d.dot(&p))
            }
        }
    }

    /// `∂s/∂p`.
    fn prob_gradient(&self, p: &[f64]) -> Array1<f64> {
        let c = p.len();
        match self {
            ScoreKind::MspConfidence => {
                let mut g = Array1::zeros(c);
                g[first_argmax(p)] = 1.0;
                g
            }
            ScoreKind::Gini => p.iter().map(|v| -2.0 * v).collect(),
            // Zero-probability entries get a zero gradient; they are
            // annihilated by the softmax Jacobian anyway.
            ScoreKind::Entropy => p.iter().map(|&v| if v > 0.0 { -(v.ln() + 1.0) } else { 0.0 }).collect(),
            ScoreKind::Bilinear(d) => {
                let p = Array1::from(p.to_vec());
                d.dot(&p) + d.t().dot(&p)
            }
        }
    }
}

/// Scalar functions of a model's logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    Constant(f64),
    Logit(usize),
    /// `log(max(s(softmax(z / T)), SCORE_FLOOR))`.
    LogScore { kind: ScoreKind, temperature: f64 },
}

impl Functional {
    pub fn log_score(kind: ScoreKind, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(Functional::LogScore { kind, temperature })
    }

    /// The score a method perturbs with: MSP confidence for ODIN, Gini for
    /// Doctor and fallback Rel-U, the learned bilinear form for Rel-U.
    /// `None` for methods without perturbation.
    pub fn for_method(method: Method, temperature: f64, relu: Option<&RelUMatrix>) -> Result<Option<Self>> {
        let kind = match method {
            Method::Odin => ScoreKind::MspConfidence,
            Method::GiniDoctor => ScoreKind::Gini,
            Method::RelU => match relu {
                Some(d) if !d.is_fallback() => ScoreKind::Bilinear(d.entries().clone()),
                Some(_) => ScoreKind::Gini,
                None => return Err(Error::Parameter("Rel-U perturbation needs a fitted matrix".into())),
            },
            _ => return Ok(None),
        };
        Self::log_score(kind, temperature).map(Some)
    }

    pub fn value(&self, logits: &[f64]) -> f64 {
        match self {
            Functional::Constant(c) => *c,
            Functional::Logit(k) => logits[*k],
            Functional::LogScore { kind, temperature } => {
                let p = stable_softmax(&logits.iter().map(|z| z / temperature).collect::<Vec<_>>());
                kind.value(&p).max(SCORE_FLOOR).ln()
            }
        }
    }

    /// `∂F/∂z`.
    pub fn logit_gradient(&self, logits: &[f64]) -> Array1<f64> {
        let c = logits.len();
        match self {
            Functional::Constant(_) => Array1::zeros(c),
            Functional::Logit(k) => {
                let mut g = Array1::zeros(c);
                g[*k] = 1.0;
                g
            }
            Functional::LogScore { kind, temperature } => {
                let p = stable_softmax(&logits.iter().map(|z| z / temperature).collect::<Vec<_>>());
                let s = kind.value(&p);
                if s <= SCORE_FLOOR {
                    return Array1::zeros(c);
                }
                // Softmax Jacobian (diag(p) − p pᵀ) / T applied to ∂log s/∂p.
                let v = kind.prob_gradient(&p) / s;
                let mean: f64 = p.iter().zip(&v).map(|(pi, vi)| pi * vi).sum();
                p.iter().zip(&v).map(|(pi, vi)| pi * (vi - mean) / temperature).collect()
            }
        }
    }

    fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self {
            Functional::Logit(k) if *k >= num_classes => Err(Error::Parameter(format!(
                "logit {k} out of range for {num_classes} classes"
            ))),
            Functional::LogScore {
                kind: ScoreKind::Bilinear(d),
                ..
            } if d.nrows() != num_classes || d.ncols() != num_classes => Err(Error::Dimension {
                expected: num_classes,
                actual: d.nrows(),
            }),
            _ => Ok(()),
        }
    }
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::Numerical(format!("{what} gradient is not finite at input coordinate {i}"))),
        None => Ok(()),
    }
}

/// Analytic `∇ₓ F(f(x))` by reverse-mode differentiation through the model.
pub fn input_gradient(model: &ClassifierModel, x: &[f64], functional: &Functional) -> Result<Vec<f64>> {
    functional.check_classes(model.num_classes)?;
    let trace = model.trace(x)?;
    let gz = functional.logit_gradient(trace.logits.as_slice().expect("contiguous"));
    let g = model.backprop_input(&trace, &gz).to_vec();
    check_finite(&g, "analytic")?;
    Ok(g)
}

/// Central differences with step `1e-4 · (1 + |xᵢ|)` for any scalar function.
pub fn finite_difference_gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut point = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = 1e-4 * (1.0 + x[i].abs());
        point[i] = x[i] + h;
        let up = f(&point)?;
        point[i] = x[i] - h;
        let down = f(&point)?;
        point[i] = x[i];
        g.push((up - down) / (2.0 * h));
    }
    check_finite(&g, "finite-difference")?;
    Ok(g)
}

/// Finite-difference gradient of a functional of the model's logits.
pub fn model_fd_gradient(model: &ClassifierModel, x: &[f64], functional: &Functional) -> Result<Vec<f64>> {
    functional.check_classes(model.num_classes)?;
    finite_difference_gradient(|p| Ok(functional.value(&model.forward(p)?)), x)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("epsilon must be non-negative, got {epsilon}")))
    }
}

/// `x′ = x − ε · sign(−∇ₓ F(x))` given the gradient of `F`.
pub fn signed_step(x: &[f64], grad: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if x.len() != grad.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: grad.len(),
        });
    }
    if epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    Ok(x.iter().zip(grad).map(|(xi, gi)| xi - epsilon * sign(-gi)).collect())
}

/// One signed-gradient step on `log s`. `ε = 0` returns `x` untouched
/// without evaluating the model.
pub fn perturb_input(model: &ClassifierModel, x: &[f64], epsilon: f64, functional: &Functional) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let g = input_gradient(model, x, functional)?;
    signed_step(x, &g, epsilon)
}
