//! Expected calibration error and temperature fitting.

use serde::{Deserialize, Serialize};

use crate::domain::{softmax_with_temperature, LogitVector, ProbVector};
use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 15;
pub const TEMPERATURE_GRID_MIN: f64 = 0.05;
pub const TEMPERATURE_GRID_MAX: f64 = 10.0;
pub const TEMPERATURE_GRID_POINTS: usize = 100;

/// Equal-width, right-closed bins on the max probability:
/// `Σ_b (n_b / N) · |acc_b − conf_b|`.
pub fn ece(probs: &[ProbVector], labels: &[usize], num_bins: usize) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Input(format!("{} predictions but {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::Degenerate("calibration error of an empty set".into()));
    }
    if num_bins == 0 {
        return Err(Error::Parameter("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; num_bins];
    let mut hits = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0f64; num_bins];
    for (p, &y) in probs.iter().zip(labels) {
        let conf = p.max();
        let bin = ((conf * num_bins as f64).ceil() as usize).clamp(1, num_bins) - 1;
        count[bin] += 1;
        conf_sum[bin] += conf;
        if p.argmax() == y {
            hits[bin] += 1;
        }
    }
    let n = probs.len() as f64;
    Ok((0..num_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (hits[b] as f64 / nb - conf_sum[b] / nb).abs()
        })
        .sum())
}

pub fn ece_at_temperature(logits: &[LogitVector], labels: &[usize], temperature: f64, num_bins: usize) -> Result<f64> {
    let probs = logits
        .iter()
        .map(|z| softmax_with_temperature(z, temperature))
        .collect::<Result<Vec<_>>>()?;
    ece(&probs, labels, num_bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub ece: f64,
    /// ECE did not vary over the grid; the smallest grid value was returned.
    pub flat: bool,
}

/// `TEMPERATURE_GRID_POINTS` log-spaced values on
/// `[TEMPERATURE_GRID_MIN, TEMPERATURE_GRID_MAX]`.
pub fn temperature_grid() -> Vec<f64> {
    let (lo, hi) = (TEMPERATURE_GRID_MIN.ln(), TEMPERATURE_GRID_MAX.ln());
    let steps = (TEMPERATURE_GRID_POINTS - 1) as f64;
    (0..TEMPERATURE_GRID_POINTS)
        .map(|k| (lo + (hi - lo) * k as f64 / steps).exp())
        .collect()
}

/// Temperature minimizing ECE: grid search, then golden-section refinement
/// (in log-temperature) between the grid neighbours of the best cell. The
/// refined value is kept only if it strictly improves on the grid.
pub fn calibrate_temperature(logits: &[LogitVector], labels: &[usize]) -> Result<TemperatureFit> {
    if logits.len() < 2 {
        return Err(Error::Degenerate(format!(
            "temperature calibration needs at least 2 samples, got {}",
            logits.len()
        )));
    }
    let eval = |t: f64| ece_at_temperature(logits, labels, t, DEFAULT_ECE_BINS);
    let grid = temperature_grid();
    let values = grid.iter().map(|&t| eval(t)).collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    let spread = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - values[best];
    if spread <= 1e-15 {
        log::warn!("ECE is flat in the temperature; returning the smallest grid temperature");
        return Ok(TemperatureFit {
            temperature: grid[0],
            ece: values[0],
            flat: true,
        });
    }

    let mut lo = grid[best.saturating_sub(1)].ln();
    let mut hi = grid[(best + 1).min(grid.len() - 1)].ln();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1.exp())?;
    let mut f2 = eval(x2.exp())?;
    for _ in 0..40 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1.exp())?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2.exp())?;
        }
    }
    let (x, f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(if f < values[best] {
        TemperatureFit {
            temperature: x.exp(),
            ece: f,
            flat: false,
        }
    } else {
        TemperatureFit {
            temperature: grid[best],
            ece: values[best],
            flat: false,
        }
    })
}
