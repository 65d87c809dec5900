//! Scaling of T₂ with the number of π-pulses.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::lm::{self, Bounds};
use super::{check_finite, FitNote, FitParam, FitResult, ModelId};
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Prefer the power law unless saturation lowers AICc by more than 2.
    Auto,
    Saturation,
    Power,
}

/// AICc margin the saturation model must win by in [`ScalingMode::Auto`].
const AICC_MARGIN: f64 = 2.0;

/// `T2(N) = T2(1)·N^s`.
pub fn power_model(n: f64, t2_1: f64, s: f64) -> f64 {
    if s == 0.0 {
        return t2_1;
    }
    t2_1 * n.powf(s)
}

/// `T2(N) = T2(1)·[N_sat^s + (N^s − N_sat^s)·exp(−N/N_sat)]`.
/// At `N = 1` this is not exactly `T2(1)`.
pub fn saturation_model(n: f64, t2_1: f64, s: f64, n_sat: f64) -> f64 {
    let a = n_sat.powf(s);
    let b = n.powf(s);
    t2_1 * (a + (b - a) * (-n / n_sat).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2ScalingFit {
    pub fit: FitResult,
    /// AICc of each candidate that was fitted.
    pub aicc_power: Option<f64>,
    pub aicc_saturation: Option<f64>,
}

fn aicc(cost: f64, m: usize, k: usize) -> f64 {
    let m_f = m as f64;
    let k_f = k as f64;
    let rss = cost.max(1e-300);
    let aic = m_f * (rss / m_f).ln() + 2.0 * k_f;
    if m > k + 1 {
        aic + 2.0 * k_f * (k_f + 1.0) / (m_f - k_f - 1.0)
    } else {
        f64::INFINITY
    }
}

/// Fit T₂ against pulse count. Residuals are relative, `(model − T2)/T2`,
/// so every point carries the same fractional weight.
pub fn fit_t2_vs_n(ns: &[u64], t2s: &[f64], mode: ScalingMode) -> Result<T2ScalingFit> {
    if ns.len() != t2s.len() {
        return Err(Error::invalid(
            "pulse counts and T2 values differ in length",
        ));
    }
    if ns.contains(&0) {
        return Err(Error::invalid("pulse counts must be positive integers"));
    }
    check_finite("T2", t2s)?;
    if t2s.iter().any(|&t| t <= 0.0) {
        return Err(Error::invalid("T2 values must be positive"));
    }
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let m = x.len();
    match mode {
        ScalingMode::Power => {
            let (fit, cost) = fit_power(&x, t2s)?;
            Ok(T2ScalingFit {
                fit,
                aicc_power: Some(aicc(cost, m, 2)),
                aicc_saturation: None,
            })
        }
        ScalingMode::Saturation => {
            let (fit, cost) = fit_saturation(&x, t2s)?;
            Ok(T2ScalingFit {
                fit,
                aicc_power: None,
                aicc_saturation: Some(aicc(cost, m, 3)),
            })
        }
        ScalingMode::Auto => {
            let (pow, pow_cost) = fit_power(&x, t2s)?;
            let a_pow = aicc(pow_cost, m, 2);
            if m < 5 {
                return Ok(T2ScalingFit {
                    fit: pow,
                    aicc_power: Some(a_pow),
                    aicc_saturation: None,
                });
            }
            let (sat, sat_cost) = match fit_saturation(&x, t2s) {
                Ok(v) => v,
                Err(Error::FitNonConvergence { .. }) => {
                    return Ok(T2ScalingFit {
                        fit: pow,
                        aicc_power: Some(a_pow),
                        aicc_saturation: None,
                    })
                }
                Err(e) => return Err(e),
            };
            let a_sat = aicc(sat_cost, m, 3);
            let fit = if a_sat < a_pow - AICC_MARGIN {
                sat
            } else {
                pow
            };
            Ok(T2ScalingFit {
                fit,
                aicc_power: Some(a_pow),
                aicc_saturation: Some(a_sat),
            })
        }
    }
}

/// Log-log least squares, used as the power-law starting point.
fn loglog_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let s = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    ((my - s * mx).exp(), s)
}

fn fit_power(x: &[f64], y: &[f64]) -> Result<(FitResult, f64)> {
    let m = x.len();
    if m < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: m });
    }
    let (t0, s0) = loglog_line(x, y);
    let eval = |p: &[f64], r: &mut [f64], j: &mut DMatrix<f64>| {
        if !(p[0] > 0.0) {
            return false;
        }
        for i in 0..m {
            let g = x[i].powf(p[1]);
            let model = p[0] * g;
            r[i] = (model - y[i]) / y[i];
            j[(i, 0)] = g / y[i];
            j[(i, 1)] = model * x[i].ln() / y[i];
        }
        true
    };
    let out = lm::minimize(eval, &[t0, s0], m, &Bounds::unbounded(2))?;
    let cov = lm::covariance(&out.jacobian, out.cost);
    let params = vec![
        FitParam {
            name: "T2_1",
            value: out.params[0],
            stderr: cov[(0, 0)].sqrt(),
        },
        FitParam {
            name: "s",
            value: out.params[1],
            stderr: cov[(1, 1)].sqrt(),
        },
    ];
    let fit = FitResult::new(ModelId::T2PowerLaw, params, out.cost.sqrt(), m, Vec::new());
    Ok((fit, out.cost))
}

fn fit_saturation(x: &[f64], y: &[f64]) -> Result<(FitResult, f64)> {
    let m = x.len();
    if m < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: m });
    }
    let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().copied().fold(0.0, f64::max);
    if x_max <= x_min {
        return Err(Error::Degenerate(
            "need at least two distinct pulse counts".into(),
        ));
    }
    let bounds = Bounds {
        lower: vec![0.0, -3.0, 0.1 * x_min],
        upper: vec![f64::INFINITY, 3.0, 1e4 * x_max],
    };
    let eval = |p: &[f64], r: &mut [f64], j: &mut DMatrix<f64>| {
        let (t1, s, ns) = (p[0], p[1], p[2]);
        if !(ns > 0.0) {
            return false;
        }
        let a = ns.powf(s);
        let ln_ns = ns.ln();
        for i in 0..m {
            let b = x[i].powf(s);
            let e = (-x[i] / ns).exp();
            let g = a + (b - a) * e;
            r[i] = (t1 * g - y[i]) / y[i];
            j[(i, 0)] = g / y[i];
            j[(i, 1)] = t1 * (a * ln_ns * (1.0 - e) + b * x[i].ln() * e) / y[i];
            j[(i, 2)] = t1 * (s * a / ns * (1.0 - e) + (b - a) * e * x[i] / (ns * ns)) / y[i];
        }
        true
    };

    // Starts: slope from the low-N half, saturation point spread over the range.
    let half = (m / 2).max(2);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let lx: Vec<f64> = order[..half].iter().map(|&i| x[i]).collect();
    let ly: Vec<f64> = order[..half].iter().map(|&i| y[i]).collect();
    let (t0, s0) = loglog_line(&lx, &ly);
    let s0 = s0.clamp(-2.5, 2.5);
    let mut best: Option<lm::Outcome> = None;
    let mut last_err = None;
    for k in 0..6 {
        let ns0 = x_min * 2.0 * (x_max / x_min).powf(k as f64 / 5.0);
        match lm::minimize(eval, &[t0, s0, ns0], m, &bounds) {
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
    let mut notes = Vec::new();
    for i in bounds.active(&out.params) {
        notes.push(FitNote::AtBound(["T2_1", "s", "N_sat"][i]));
    }
    let params = vec![
        FitParam {
            name: "T2_1",
            value: out.params[0],
            stderr: cov[(0, 0)].sqrt(),
        },
        FitParam {
            name: "s",
            value: out.params[1],
            stderr: cov[(1, 1)].sqrt(),
        },
        FitParam {
            name: "N_sat",
            value: out.params[2],
            stderr: cov[(2, 2)].sqrt(),
        },
    ];
    let fit = FitResult::new(ModelId::T2Saturation, params, out.cost.sqrt(), m, notes);
    Ok((fit, out.cost))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: [u64; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

    #[test]
    fn identities() {
        for n in [1.0, 7.0, 512.0] {
            assert_eq!(power_model(n, 12e-6, 0.0), 12e-6);
        }
        assert_eq!(power_model(1.0, 12e-6, 0.63), 12e-6);
    }

    #[test]
    fn noiseless_power_and_saturation() {
        let y: Vec<f64> = NS
            .iter()
            .map(|&n| power_model(n as f64, 10e-6, 0.6))
            .collect();
        let f = fit_t2_vs_n(&NS, &y, ScalingMode::Auto).unwrap().fit;
        assert_eq!(f.model, ModelId::T2PowerLaw);
        assert!((f.param("s").unwrap() - 0.6).abs() < 1e-9);

        let y: Vec<f64> = NS
            .iter()
            .map(|&n| saturation_model(n as f64, 10e-6, 0.7, 30.0))
            .collect();
        let f = fit_t2_vs_n(&NS, &y, ScalingMode::Auto).unwrap().fit;
        assert_eq!(f.model, ModelId::T2Saturation);
        assert!((f.param("T2_1").unwrap() / 10e-6 - 1.0).abs() < 1e-6);
        assert!((f.param("s").unwrap() / 0.7 - 1.0).abs() < 1e-6);
        assert!((f.param("N_sat").unwrap() / 30.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        assert!(fit_t2_vs_n(&[0, 1, 2, 3], &[1.0; 4], ScalingMode::Power).is_err());
        assert!(fit_t2_vs_n(&[1, 2, 3], &[1.0; 3], ScalingMode::Power).is_err());
        assert!(fit_t2_vs_n(&[1, 2, 3, 4], &[1.0; 4], ScalingMode::Saturation).is_err());
    }
}
