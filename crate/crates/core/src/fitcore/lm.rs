//! Box-constrained Levenberg–Marquardt for small dense problems.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Iteration budget shared by every nonlinear fitter.
pub const MAX_ITERATIONS: usize = 200;

pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Indices of parameters sitting on a finite bound.
    pub fn active(&self, p: &[f64]) -> Vec<usize> {
        p.iter()
            .enumerate()
            .filter(|&(i, &v)| {
                let scale = 1e-9 * (1.0 + v.abs());
                (self.lower[i].is_finite() && v - self.lower[i] <= scale)
                    || (self.upper[i].is_finite() && self.upper[i] - v <= scale)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) struct Outcome {
    pub params: Vec<f64>,
    /// Sum of squared (weighted) residuals.
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    /// Cost after every accepted step, starting with the initial cost.
    #[allow(dead_code)]
    pub history: Vec<f64>,
}

/// `eval(p, r, j)` fills the residual vector `r` and the Jacobian `j` (rows =
/// residuals) at `p` and returns `false` if `p` is outside the model's domain.
pub(crate) fn minimize<F>(
    mut eval: F,
    initial: &[f64],
    m: usize,
    bounds: &Bounds,
) -> Result<Outcome>
where
    F: FnMut(&[f64], &mut [f64], &mut DMatrix<f64>) -> bool,
{
    let n = initial.len();
    let mut p = initial.to_vec();
    bounds.project(&mut p);
    let mut r = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, n);
    if !eval(&p, &mut r, &mut jac) {
        return Err(Error::Degenerate(
            "initial guess outside model domain".into(),
        ));
    }
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    if !cost.is_finite() {
        return Err(Error::Degenerate(
            "non-finite residuals at initial guess".into(),
        ));
    }
    let mut history = vec![cost];
    let mut trial = vec![0.0; m];
    let mut trial_jac = DMatrix::zeros(m, n);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let rv = DVector::from_column_slice(&r);
        let mut jtj = jac.transpose() * &jac;
        let mut grad = jac.transpose() * &rv;
        // Parameters on a bound with the descent direction pointing out of
        // the box are frozen for this step.
        for i in 0..n {
            let at_lo = bounds.lower[i].is_finite() && p[i] <= bounds.lower[i] && grad[i] > 0.0;
            let at_hi = bounds.upper[i].is_finite() && p[i] >= bounds.upper[i] && grad[i] < 0.0;
            if at_lo || at_hi {
                for k in 0..n {
                    jtj[(i, k)] = 0.0;
                    jtj[(k, i)] = 0.0;
                }
                jtj[(i, i)] = 1.0;
                grad[i] = 0.0;
            }
        }
        let mut accepted = false;
        let mut candidate = p.clone();
        let mut trial_cost = f64::INFINITY;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&grad));
            for i in 0..n {
                candidate[i] = p[i] + delta[i];
            }
            bounds.project(&mut candidate);
            if eval(&candidate, &mut trial, &mut trial_jac) {
                trial_cost = trial.iter().map(|x| x * x).sum();
                if trial_cost.is_finite() && trial_cost <= cost {
                    accepted = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at machine precision.
            return Ok(Outcome {
                params: p,
                cost,
                jacobian: jac,
                history,
            });
        }
        let moved = (0..n)
            .map(|i| (candidate[i] - p[i]).abs())
            .fold(0.0, f64::max);
        let size = p.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let improvement = cost - trial_cost;
        core::mem::swap(&mut p, &mut candidate);
        core::mem::swap(&mut r, &mut trial);
        core::mem::swap(&mut jac, &mut trial_jac);
        cost = trial_cost;
        history.push(cost);
        lambda = (lambda / 3.0).max(1e-12);
        if improvement <= 1e-15 * cost.max(1e-300) || moved <= 1e-12 * (size + 1e-12) {
            return Ok(Outcome {
                params: p,
                cost,
                jacobian: jac,
                history,
            });
        }
    }
    Err(Error::FitNonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Parameter covariance `s²·(JᵀJ)⁻¹` with `s² = cost/(m − n)`. Entries are NaN
/// when the system is singular or has no residual degrees of freedom.
pub(crate) fn covariance(jac: &DMatrix<f64>, cost: f64) -> DMatrix<f64> {
    let (m, n) = jac.shape();
    let nan = DMatrix::from_element(n, n, f64::NAN);
    if m <= n {
        return nan;
    }
    let s2 = cost / (m - n) as f64;
    match (jac.transpose() * jac).try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => inv * s2,
        _ => nan,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_and_cost_never_increases() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * (-1.3 * x).exp() + 0.01 * (7.0 * x).sin())
            .collect();
        let out = minimize(
            |p, r, j| {
                for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
                    let e = (-p[1] * x).exp();
                    r[i] = p[0] * e - y;
                    j[(i, 0)] = e;
                    j[(i, 1)] = -p[0] * x * e;
                }
                true
            },
            &[0.5, 5.0],
            xs.len(),
            &Bounds::unbounded(2),
        )
        .unwrap();
        assert!((out.params[0] - 2.0).abs() < 0.02 && (out.params[1] - 1.3).abs() < 0.02);
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let cov = covariance(&out.jacobian, out.cost);
        assert!(cov[(0, 0)] > 0.0 && cov[(1, 1)] > 0.0);
    }

    #[test]
    fn bounds_are_respected() {
        // Unconstrained optimum at p = −1.
        let out = minimize(
            |p, r, j| {
                r[0] = p[0] + 1.0;
                j[(0, 0)] = 1.0;
                true
            },
            &[3.0],
            1,
            &Bounds {
                lower: vec![0.0],
                upper: vec![10.0],
            },
        )
        .unwrap();
        assert_eq!(out.params[0], 0.0);
    }
}
