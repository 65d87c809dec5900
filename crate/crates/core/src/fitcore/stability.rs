//! Layer-stability fits: exponential decay of counts and linear thickness drift.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use nalgebra::DMatrix;

use super::lm::{self, Bounds};
use super::{check_finite, FitNote, FitParam, FitResult, ModelId};
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

fn check_xy(x: &[f64], y: &[f64], needed: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    if x.len() < needed {
        return Err(Error::TooFewPoints {
            needed,
            got: x.len(),
        });
    }
    check_finite("times", x)?;
    check_finite("values", y)
}

/// Ordinary least squares `y = intercept + slope·t`.
///
/// With exactly two points the line interpolates and the standard errors are
/// NaN, flagged by [`FitNote::StdErrUndefined`].
pub fn fit_linear(times: &[f64], values: &[f64]) -> Result<FitResult> {
    check_xy(times, values, 2)?;
    let m = times.len();
    let mf = m as f64;
    let mx = times.iter().sum::<f64>() / mf;
    let my = values.iter().sum::<f64>() / mf;
    let sxx: f64 = times.iter().map(|t| (t - mx) * (t - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all times are equal".into()));
    }
    let sxy: f64 = times
        .iter()
        .zip(values)
        .map(|(t, y)| (t - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = times
        .iter()
        .zip(values)
        .map(|(t, y)| {
            let r = y - intercept - slope * t;
            r * r
        })
        .sum();
    let (se_slope, se_icpt) = if m > 2 {
        let s2 = rss / (mf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / mf + mx * mx / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    let params = vec![
        FitParam {
            name: "intercept",
            value: intercept,
            stderr: se_icpt,
        },
        FitParam {
            name: "slope",
            value: slope,
            stderr: se_slope,
        },
    ];
    Ok(FitResult::new(
        ModelId::Linear,
        params,
        rss.sqrt(),
        m,
        Vec::new(),
    ))
}

/// Least squares of `V0·2^(−t/half_life)`.
///
/// The decay rate is constrained to be non-negative; data without decay
/// gives an infinite half-life and a non-converged result.
pub fn fit_exp_decay(times: &[f64], values: &[f64]) -> Result<FitResult> {
    check_xy(times, values, 3)?;
    let m = times.len();
    // Start from a log-linear fit of the positive values.
    let (lt, lv): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    let (v0, k0) = match fit_linear(&lt, &lv) {
        Ok(f) => (
            f.param("intercept").unwrap_or(0.0).exp(),
            (-f.param("slope").unwrap_or(0.0)).max(0.0),
        ),
        Err(_) => (values.iter().sum::<f64>() / m as f64, 0.0),
    };
    let eval = |p: &[f64], r: &mut [f64], j: &mut DMatrix<f64>| {
        for i in 0..m {
            let e = (-p[1] * times[i]).exp();
            r[i] = p[0] * e - values[i];
            j[(i, 0)] = e;
            j[(i, 1)] = -times[i] * p[0] * e;
        }
        true
    };
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, 0.0],
        upper: vec![f64::INFINITY, f64::INFINITY],
    };
    let out = lm::minimize(eval, &[v0, k0], m, &bounds)?;
    let cov = lm::covariance(&out.jacobian, out.cost);
    let span = times.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - times.iter().copied().fold(f64::INFINITY, f64::min);
    // A rate invisible over the sampled span is no decay at all.
    let k = if out.params[1] * span < 1e-12 {
        0.0
    } else {
        out.params[1]
    };
    let mut notes = Vec::new();
    let (half_life, se_half) = if k > 0.0 {
        (LN_2 / k, LN_2 / (k * k) * cov[(1, 1)].sqrt())
    } else {
        notes.push(FitNote::AtBound("half_life"));
        (f64::INFINITY, f64::INFINITY)
    };
    let params = vec![
        FitParam {
            name: "V0",
            value: out.params[0],
            stderr: cov[(0, 0)].sqrt(),
        },
        FitParam {
            name: "half_life",
            value: half_life,
            stderr: se_half,
        },
    ];
    Ok(FitResult::new(
        ModelId::ExpDecay,
        params,
        out.cost.sqrt(),
        m,
        notes,
    ))
}
