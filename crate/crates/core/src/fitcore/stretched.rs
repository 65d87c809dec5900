//! Stretched-exponential coherence fits.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::lm::{self, Bounds};
use super::{check_finite, FitNote, FitParam, FitResult, ModelId};
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

/// Allowed range of the stretch exponent.
pub const STRETCH_BOUNDS: (f64, f64) = (0.5, 3.0);
/// Starting exponents tried; the lowest-cost solution wins.
pub const STRETCH_STARTS: [f64; 3] = [0.8, 1.2, 1.8];

/// `A·exp[−(t/T2)^n]`.
pub fn stretched_exp(t: f64, a: f64, t2: f64, n: f64) -> f64 {
    a * (-(t / t2).powf(n)).exp()
}

/// Least-squares fit of `A·exp[−(t/T2)^n]`.
///
/// `weights` are inverse variances; `None` means unit weights. Parameters in
/// the result are `A`, `T2` (same unit as `times`) and `n`.
pub fn fit_stretched_exp(
    times: &[f64],
    contrast: &[f64],
    weights: Option<&[f64]>,
) -> Result<FitResult> {
    let m = times.len();
    if m < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: m });
    }
    if contrast.len() != m {
        return Err(Error::invalid("times and contrast differ in length"));
    }
    check_finite("times", times)?;
    check_finite("contrast", contrast)?;
    if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "times must be positive and strictly increasing",
        ));
    }
    let sw: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != m {
                return Err(Error::invalid("weights and contrast differ in length"));
            }
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::invalid("weights must be positive and finite"));
            }
            w.iter().map(|x| x.sqrt()).collect()
        }
        None => vec![1.0; m],
    };
    let lo = contrast.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = contrast.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = contrast.iter().map(|c| c.abs()).fold(0.0, f64::max);
    if !(hi - lo > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("contrast is constant".into()));
    }

    // T2 is carried as u = ln(T2/t_max) to keep the problem well scaled.
    let t_max = times[m - 1];
    let a0 = contrast[..m.min(3)].iter().sum::<f64>() / m.min(3) as f64;
    let a0 = if a0.abs() > 0.0 { a0 } else { hi };
    let t2_guess = times
        .iter()
        .zip(contrast)
        .find(|&(_, &c)| c < a0 * (-1.0f64).exp())
        .map_or(t_max, |(&t, _)| t);
    let u0 = (t2_guess / t_max).ln();
    let bounds = Bounds {
        lower: vec![
            f64::NEG_INFINITY,
            (times[0] / t_max).ln() - 10.0,
            STRETCH_BOUNDS.0,
        ],
        upper: vec![f64::INFINITY, 10.0, STRETCH_BOUNDS.1],
    };

    let eval = |p: &[f64], r: &mut [f64], j: &mut DMatrix<f64>| {
        let (a, t2, n) = (p[0], t_max * p[1].exp(), p[2]);
        for i in 0..m {
            let ratio = times[i] / t2;
            let x = ratio.powf(n);
            let e = (-x).exp();
            r[i] = sw[i] * (a * e - contrast[i]);
            j[(i, 0)] = sw[i] * e;
            j[(i, 1)] = sw[i] * a * e * n * x;
            j[(i, 2)] = -sw[i] * a * e * x * ratio.ln();
        }
        true
    };

    let mut best: Option<lm::Outcome> = None;
    let mut last_err = None;
    for &n0 in &STRETCH_STARTS {
        match lm::minimize(eval, &[a0, u0, n0], m, &bounds) {
            Ok(out) => {
                if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(out) = best else {
        return Err(last_err.unwrap_or(Error::FitNonConvergence {
            iterations: lm::MAX_ITERATIONS,
        }));
    };

    let cov = lm::covariance(&out.jacobian, out.cost);
    let t2 = t_max * out.params[1].exp();
    let mut notes = Vec::new();
    for i in bounds.active(&out.params) {
        notes.push(FitNote::AtBound(["A", "T2", "n"][i]));
    }
    let params = vec![
        FitParam {
            name: "A",
            value: out.params[0],
            stderr: cov[(0, 0)].sqrt(),
        },
        FitParam {
            name: "T2",
            value: t2,
            stderr: t2 * cov[(1, 1)].sqrt(),
        },
        FitParam {
            name: "n",
            value: out.params[2],
            stderr: cov[(2, 2)].sqrt(),
        },
    ];
    Ok(FitResult::new(
        ModelId::StretchedExp,
        params,
        out.cost.sqrt(),
        m,
        notes,
    ))
}
