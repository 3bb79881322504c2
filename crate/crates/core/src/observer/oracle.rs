//! Iterative solver for the observer-matrix problem, used to check the
//! closed form.
//!
//! Projected gradient descent on the linear objective. Each projection runs
//! symmetrize, zero the diagonal, clamp at zero, then shrink onto the
//! Frobenius ball of radius `sqrt(K)`. Every step keeps the constraints
//! established by the previous ones, so the composition is the Euclidean
//! projection onto the feasible set.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{objective_value, GroupedProbs};
use crate::domain::{check_lambda, ProbVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub matrix: Array2<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Norm of the projected-gradient mapping at the final iterate.
    pub gradient_norm: f64,
}

/// Plain (uncompensated) mean of outer products.
fn mean_outer(set: &[ProbVector], c: usize) -> Array2<f64> {
    let mut m = Array2::zeros((c, c));
    for p in set {
        let v = p.as_slice();
        for i in 0..c {
            for j in 0..c {
                m[[i, j]] += v[i] * v[j];
            }
        }
    }
    m / set.len() as f64
}

/// Gradient of the objective with respect to `D`; constant because the
/// objective is linear.
pub fn objective_gradient(groups: &GroupedProbs, lambda: f64) -> Array2<f64> {
    let c = groups.num_classes();
    mean_outer(&groups.positives, c) * (1.0 - lambda) - mean_outer(&groups.negatives, c) * lambda
}

pub fn project_feasible(d: &Array2<f64>, norm_budget: f64) -> Array2<f64> {
    let mut p = (d + &d.t()) * 0.5;
    for i in 0..p.nrows() {
        p[[i, i]] = 0.0;
    }
    p.mapv_inplace(|v| v.max(0.0));
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = norm_budget.sqrt();
    if norm > radius {
        p *= radius / norm;
    }
    p
}

/// Random feasible starting point drawn from `seed`.
pub fn random_feasible(num_classes: usize, norm_budget: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Array2::zeros((num_classes, num_classes));
    for i in 0..num_classes {
        for j in (i + 1)..num_classes {
            let v: f64 = rng.random();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        d *= norm_budget.sqrt() * rng.random::<f64>() / norm;
    }
    d
}

/// Runs projected gradient descent from a random feasible point.
///
/// `step_size = None` picks `sqrt(K) / ‖∇L‖`.
pub fn fit_d_matrix_oracle(
    groups: &GroupedProbs,
    lambda: f64,
    norm_budget: f64,
    max_iters: usize,
    step_size: Option<f64>,
    seed: u64,
) -> Result<OracleSolution> {
    let init = random_feasible(groups.num_classes(), norm_budget, seed);
    projected_gradient_descent(groups, lambda, norm_budget, init, max_iters, step_size)
}

pub fn projected_gradient_descent(
    groups: &GroupedProbs,
    lambda: f64,
    norm_budget: f64,
    init: Array2<f64>,
    max_iters: usize,
    step_size: Option<f64>,
) -> Result<OracleSolution> {
    check_lambda(lambda)?;
    if !(norm_budget.is_finite() && norm_budget > 0.0) {
        return Err(Error::Parameter(format!("norm budget K must be positive, got {norm_budget}")));
    }
    let grad = objective_gradient(groups, lambda);
    let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let step = match step_size {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::Parameter(format!("step size must be positive, got {s}"))),
        None if grad_norm > 0.0 => norm_budget.sqrt() / grad_norm,
        None => 1.0,
    };
    let tolerance = 1e-14 * norm_budget.sqrt();

    let mut d = project_feasible(&init, norm_budget);
    let mut mapping_norm = f64::INFINITY;
    for iter in 1..=max_iters {
        let next = project_feasible(&(&d - &(&grad * step)), norm_budget);
        let change = (&next - &d).iter().map(|v| v * v).sum::<f64>().sqrt();
        mapping_norm = change / step;
        d = next;
        if change <= tolerance {
            return Ok(OracleSolution {
                objective: objective_value(&d, groups, lambda)?,
                matrix: d,
                iterations: iter,
                gradient_norm: mapping_norm,
            });
        }
    }
    Err(Error::Numerical(format!(
        "projected gradient descent did not converge in {max_iters} iterations \
         (projected gradient norm {mapping_norm:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::fit_d_matrix;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn oracle_recovers_two_class_solution() {
        let groups = GroupedProbs::new(vec![pv(&[0.9, 0.1]); 5], vec![pv(&[0.6, 0.4]); 5]).unwrap();
        let sol = fit_d_matrix_oracle(&groups, 0.5, 1.0, 10_000, None, 42).unwrap();
        assert!((sol.matrix[[0, 1]] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        let closed = fit_d_matrix(&groups, 0.5, 1.0).unwrap();
        let closed_obj = objective_value(closed.entries(), &groups, 0.5).unwrap();
        assert!((sol.objective - closed_obj).abs() < 1e-9);
    }

    #[test]
    fn closed_form_is_stationary() {
        let groups = GroupedProbs::new(
            vec![pv(&[0.8, 0.1, 0.1]), pv(&[0.7, 0.2, 0.1])],
            vec![pv(&[0.4, 0.5, 0.1]), pv(&[0.3, 0.3, 0.4])],
        )
        .unwrap();
        let closed = fit_d_matrix(&groups, 0.5, 1.0).unwrap();
        let start = objective_value(closed.entries(), &groups, 0.5).unwrap();
        let sol = projected_gradient_descent(&groups, 0.5, 1.0, closed.entries().clone(), 1000, None).unwrap();
        assert!(sol.objective >= start - 1e-9);
    }

    #[test]
    fn projection_lands_in_feasible_set() {
        let d = ndarray::array![[3.0, -1.0, 2.0], [5.0, 1.0, 0.5], [-4.0, 0.1, 7.0]];
        let p = project_feasible(&d, 2.0);
        for i in 0..3 {
            assert_eq!(p[[i, i]], 0.0);
            for j in 0..3 {
                assert!(p[[i, j]] >= 0.0);
                assert_eq!(p[[i, j]], p[[j, i]]);
            }
        }
        assert!(p.iter().map(|v| v * v).sum::<f64>() <= 2.0 + 1e-12);
    }

    #[test]
    fn non_convergence_reports_gradient_norm() {
        let groups = GroupedProbs::new(vec![pv(&[0.9, 0.1])], vec![pv(&[0.5, 0.5])]).unwrap();
        let err = fit_d_matrix_oracle(&groups, 0.5, 1.0, 1, Some(1e-9), 0).unwrap_err();
        assert!(matches!(err, Error::Numerical(m) if m.contains("gradient norm")));
    }
}
