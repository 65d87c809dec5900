//! Per-NV T₂ change statistics.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeStats {
    /// Mean reduction, percent.
    pub mean_pct: f64,
    /// Sample standard deviation of the reduction, percent; NaN for one pair.
    pub std_pct: f64,
    pub n_pairs: usize,
}

/// Reduction `100·(1 − after/before)` per NV, summarized.
pub fn t2_change_stats(before: &[f64], after: &[f64]) -> Result<ChangeStats> {
    if before.len() != after.len() {
        return Err(Error::invalid("before and after lists differ in length"));
    }
    if before.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    if before
        .iter()
        .chain(after)
        .any(|&t| !(t > 0.0) || !t.is_finite())
    {
        return Err(Error::invalid("T2 values must be positive and finite"));
    }
    let red: Vec<f64> = before
        .iter()
        .zip(after)
        .map(|(b, a)| 100.0 * (1.0 - a / b))
        .collect();
    let n = red.len() as f64;
    let mean = red.iter().sum::<f64>() / n;
    let std = if red.len() > 1 {
        (red.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    Ok(ChangeStats {
        mean_pct: mean,
        std_pct: std,
        n_pairs: red.len(),
    })
}
