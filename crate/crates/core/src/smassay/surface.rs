//! Surface roughness, layer stability, etch time and polymer extent.

use alloc::vec::Vec;

use crate::fitcore::{fit_exp_decay, fit_linear, FitResult};
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

/// Al₂O₃ removal rate of the surface reset etch, nm/min.
pub const ETCH_RATE_NM_PER_MIN: f64 = 3.6;

/// Row-major height grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub nx: usize,
    pub ny: usize,
    /// Heights, pm.
    pub heights: Vec<f64>,
    /// Lateral pitch, nm.
    pub pitch: f64,
}

impl HeightMap {
    pub fn new(nx: usize, ny: usize, heights: Vec<f64>, pitch: f64) -> Result<Self> {
        if heights.len() != nx * ny || nx == 0 || ny == 0 {
            return Err(Error::invalid("height count does not match map shape"));
        }
        if !(pitch > 0.0) || heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("pitch must be positive and heights finite"));
        }
        Ok(HeightMap {
            nx,
            ny,
            heights,
            pitch,
        })
    }
}

/// Arithmetical mean deviation after removing the least-squares plane, pm.
pub fn roughness_ra(map: &HeightMap) -> f64 {
    let (nx, ny) = (map.nx, map.ny);
    let n = (nx * ny) as f64;
    // On a full regular grid the centred coordinates are orthogonal, so the
    // plane coefficients decouple.
    let cx = 0.5 * (nx as f64 - 1.0);
    let cy = 0.5 * (ny as f64 - 1.0);
    let mean = map.heights.iter().sum::<f64>() / n;
    let (mut sxz, mut syz, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 - cx, j as f64 - cy);
            let z = map.heights[j * nx + i] - mean;
            sxz += x * z;
            syz += y * z;
            sxx += x * x;
            syy += y * y;
        }
    }
    let bx = if sxx > 0.0 { sxz / sxx } else { 0.0 };
    let by = if syy > 0.0 { syz / syy } else { 0.0 };
    let mut sum = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let plane = mean + bx * (i as f64 - cx) + by * (j as f64 - cy);
            sum += (map.heights[j * nx + i] - plane).abs();
        }
    }
    sum / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityInput<'a> {
    /// Spot counts against time in days.
    Counts { days: &'a [f64], counts: &'a [f64] },
    /// Layer thickness in nm against time in days.
    Thickness { days: &'a [f64], nm: &'a [f64] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub fit: FitResult,
    /// Half-life in days for counts, drift in nm/day for thickness.
    pub value: f64,
    pub stderr: f64,
    /// Decay rate `ln2/half_life` per day for counts, the slope for thickness.
    pub rate: f64,
}

pub fn stability_pipeline(input: StabilityInput<'_>) -> Result<StabilityReport> {
    match input {
        StabilityInput::Counts { days, counts } => {
            let fit = fit_exp_decay(days, counts)?;
            let h = fit.param("half_life").unwrap_or(f64::NAN);
            let se = fit.stderr("half_life").unwrap_or(f64::NAN);
            let rate = if h.is_infinite() {
                0.0
            } else {
                core::f64::consts::LN_2 / h
            };
            Ok(StabilityReport {
                fit,
                value: h,
                stderr: se,
                rate,
            })
        }
        StabilityInput::Thickness { days, nm } => {
            let fit = fit_linear(days, nm)?;
            let slope = fit.param("slope").unwrap_or(f64::NAN);
            let se = fit.stderr("slope").unwrap_or(f64::NAN);
            Ok(StabilityReport {
                fit,
                value: slope,
                stderr: se,
                rate: slope,
            })
        }
    }
}

/// Minutes to remove `thickness` nm of Al₂O₃.
pub fn etch_time(thickness: f64) -> Result<f64> {
    if !(thickness >= 0.0) || !thickness.is_finite() {
        return Err(Error::invalid("thickness must be non-negative"));
    }
    Ok(thickness / ETCH_RATE_NM_PER_MIN)
}

/// Gaussian-chain end-to-end extent `segment·√n`, nm.
pub fn gaussian_chain_extent(n_monomers: u64, segment: f64) -> Result<f64> {
    if n_monomers == 0 || !(segment > 0.0) || !segment.is_finite() {
        return Err(Error::invalid(
            "need at least one monomer and a positive segment length",
        ));
    }
    Ok(segment * (n_monomers as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn map(f: impl Fn(f64, f64) -> f64) -> HeightMap {
        let (nx, ny) = (128, 96);
        let h = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| f(i as f64, j as f64))
            .collect();
        HeightMap::new(nx, ny, h, 2.0).unwrap()
    }

    #[test]
    fn plane_is_flat() {
        assert!(roughness_ra(&map(|x, y| 40.0 + 3.0 * x - 1.5 * y)) < 1e-9);
    }

    #[test]
    fn sinusoid_mean_deviation() {
        let ra = roughness_ra(&map(|x, _| 459.0 * (2.0 * PI * x / 16.0).sin()));
        assert!((ra / (2.0 * 459.0 / PI) - 1.0).abs() < 0.02);
    }

    #[test]
    fn etch_and_chain() {
        assert!((etch_time(36.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((gaussian_chain_extent(64, 0.35).unwrap() - 2.8).abs() < 1e-12);
        assert_eq!(gaussian_chain_extent(1, 0.35).unwrap(), 0.35);
    }

    #[test]
    fn constant_thickness_has_zero_rate() {
        let d = [0.0, 1.0, 2.0, 3.0, 4.0];
        let r = stability_pipeline(StabilityInput::Thickness {
            days: &d,
            nm: &[5.0; 5],
        })
        .unwrap();
        assert_eq!(r.rate, 0.0);
        let r = stability_pipeline(StabilityInput::Counts {
            days: &d,
            counts: &[80.0; 5],
        })
        .unwrap();
        assert_eq!(r.rate, 0.0);
    }
}
