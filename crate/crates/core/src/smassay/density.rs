//! Adsorption density with exact Poisson intervals, and titration fits.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

/// Two-sided confidence level of density intervals.
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TitrationPoint {
    /// Functional-PEG fraction in [0, 1]; `None` until assigned.
    pub biotin_fraction: Option<f64>,
    /// Spots per µm².
    pub density: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl TitrationPoint {
    pub fn with_fraction(self, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid("biotin fraction must lie in [0, 1]"));
        }
        Ok(TitrationPoint {
            biotin_fraction: Some(fraction),
            ..self
        })
    }
}

/// `P(X ≤ n)` for `X ~ Poisson(mu)`.
fn poisson_cdf(n: u64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 1.0;
    }
    let ln_mu = mu.ln();
    let mut sum = 0.0;
    for k in 0..=n {
        let kf = k as f64;
        sum += (kf * ln_mu - mu - libm::lgamma(kf + 1.0)).exp();
    }
    sum.min(1.0)
}

/// Solve `f(mu) = target` for decreasing `f` by bisection.
fn solve_decreasing(f: impl Fn(f64) -> f64, target: f64, hi_start: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi_start.max(1.0));
    while f(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Garwood) interval for a Poisson mean given `n` observed events.
pub fn poisson_interval(n: u64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("confidence level must lie in (0, 1)"));
    }
    let alpha = 0.5 * (1.0 - level);
    let nf = n as f64;
    let upper = solve_decreasing(
        |mu| poisson_cdf(n, mu),
        alpha,
        nf + 10.0 * (nf + 1.0).sqrt() + 10.0,
    );
    let lower = if n == 0 {
        0.0
    } else {
        // P(X ≥ n) = 1 − P(X ≤ n − 1) is increasing in mu.
        solve_decreasing(|mu| poisson_cdf(n - 1, mu), 1.0 - alpha, nf)
    };
    Ok((lower, upper))
}

/// Density `n/area` with its exact 95% interval.
pub fn estimate_density(n_spots: u64, area: f64) -> Result<TitrationPoint> {
    if !(area > 0.0) || !area.is_finite() {
        return Err(Error::invalid("area must be positive"));
    }
    let (lo, hi) = poisson_interval(n_spots, CI_LEVEL)?;
    Ok(TitrationPoint {
        biotin_fraction: None,
        density: n_spots as f64 / area,
        ci_low: lo / area,
        ci_high: hi / area,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TitrationFit {
    /// Non-specific density at zero fraction, µm⁻².
    pub rho_ns: f64,
    /// µm⁻² per unit fraction.
    pub slope: f64,
    /// Fitted density at the largest fraction over `rho_ns`; infinite when
    /// `rho_ns` is zero.
    pub dynamic_range: f64,
    /// The unconstrained intercept was negative and has been set to zero.
    pub clamped: bool,
}

/// Weighted least squares of `density = rho_ns + slope·fraction`, weights
/// from the interval half-widths.
pub fn fit_titration(points: &[TitrationPoint]) -> Result<TitrationFit> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ws = Vec::with_capacity(points.len());
    for p in points {
        let x = p
            .biotin_fraction
            .ok_or_else(|| Error::invalid("titration point without a fraction"))?;
        if !(p.ci_low <= p.density && p.density <= p.ci_high) {
            return Err(Error::invalid("density outside its interval"));
        }
        let half = 0.5 * (p.ci_high - p.ci_low);
        xs.push(x);
        ws.push(if half > 0.0 { 1.0 / (half * half) } else { 1.0 });
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = points
        .iter()
        .zip(&ws)
        .map(|(p, w)| w * p.density)
        .sum::<f64>()
        / sw;
    let sxx: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| w * (x - mx) * (x - mx))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all fractions are equal".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(points)
        .zip(&ws)
        .map(|((x, p), w)| w * (x - mx) * (p.density - my))
        .sum();
    let mut slope = sxy / sxx;
    let mut rho_ns = my - slope * mx;
    let clamped = rho_ns < 0.0;
    if clamped {
        rho_ns = 0.0;
        // Refit the slope through the origin.
        let sxx0: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x).sum();
        let sxy0: f64 = xs
            .iter()
            .zip(points)
            .zip(&ws)
            .map(|((x, p), w)| w * x * p.density)
            .sum();
        slope = sxy0 / sxx0;
    }
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = rho_ns + slope * x_max;
    let dynamic_range = if rho_ns > 0.0 {
        top / rho_ns
    } else {
        f64::INFINITY
    };
    Ok(TitrationFit {
        rho_ns,
        slope,
        dynamic_range,
        clamped,
    })
}
