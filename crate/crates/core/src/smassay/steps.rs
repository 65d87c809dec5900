//! Photobleach traces and step counting.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

/// Uniformly sampled intensity trace of one spot.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub spot_id: u32,
    /// Time of the first sample, s.
    pub t0: f64,
    /// Sampling interval, s.
    pub dt: f64,
    pub intensity: Vec<f64>,
}

impl TraceSeries {
    pub fn new(spot_id: u32, t0: f64, dt: f64, intensity: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::invalid("trace needs a positive sampling interval"));
        }
        if intensity.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "intensities must be non-negative and finite",
            ));
        }
        Ok(TraceSeries {
            spot_id,
            t0,
            dt,
            intensity,
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    /// Same samples in reverse order.
    pub fn reversed(&self) -> Self {
        let mut intensity = self.intensity.clone();
        intensity.reverse();
        TraceSeries { intensity, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleachSpec {
    /// Intensity lost at each bleach event.
    pub step_height: f64,
    pub noise_sigma: f64,
    /// Level after the last fluorophore bleaches.
    pub background: f64,
    /// Sample index of the first sample after each bleach event.
    pub bleach_times: Vec<usize>,
    pub length: usize,
    /// Sampling interval, s.
    pub dt: f64,
}

/// Trace of `bleach_times.len()` fluorophores, each dropping out at its
/// bleach index, plus Gaussian read noise; negative samples clip to zero.
pub fn synth_bleach_trace(spec: &BleachSpec, seed: u64) -> Result<TraceSeries> {
    if !(spec.step_height > 0.0) || !(spec.noise_sigma >= 0.0) || !(spec.background >= 0.0) {
        return Err(Error::invalid(
            "step height must be positive, noise and background non-negative",
        ));
    }
    if spec.bleach_times.iter().any(|&t| t >= spec.length) {
        return Err(Error::invalid("bleach time beyond trace length"));
    }
    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|_| Error::invalid("bad noise sigma"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intensity = (0..spec.length)
        .map(|i| {
            let on = spec.bleach_times.iter().filter(|&&t| i < t).count() as f64;
            (spec.background + on * spec.step_height + noise.sample(&mut rng)).max(0.0)
        })
        .collect();
    TraceSeries::new(0, 0.0, spec.dt, intensity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    /// Split when the pooled two-sample |t| exceeds this.
    pub threshold: f64,
    /// Minimum samples on each side of a split.
    pub min_segment: usize,
}

impl Default for StepParams {
    fn default() -> Self {
        StepParams {
            threshold: 5.0,
            min_segment: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepClassification {
    pub n_steps: usize,
    /// First sample index of each new level, ascending.
    pub step_indices: Vec<usize>,
    /// Corresponding times, s.
    pub step_times: Vec<f64>,
}

/// Best split of `x` by pooled two-sample t statistic; returns `(index, |t|)`.
fn best_split(x: &[f64], min_seg: usize) -> Option<(usize, f64)> {
    let n = x.len();
    if n < 2 * min_seg || n < 3 {
        return None;
    }
    let mut prefix = vec![0.0; n + 1];
    let mut prefix2 = vec![0.0; n + 1];
    // Centre first to keep the running sums well conditioned.
    let shift = x.iter().sum::<f64>() / n as f64;
    for (i, &v) in x.iter().enumerate() {
        let d = v - shift;
        prefix[i + 1] = prefix[i] + d;
        prefix2[i + 1] = prefix2[i] + d * d;
    }
    let mut best: Option<(usize, f64)> = None;
    for k in min_seg..=n - min_seg {
        let (n1, n2) = (k as f64, (n - k) as f64);
        let (s1, s2) = (prefix[k], prefix[n] - prefix[k]);
        let (q1, q2) = (prefix2[k], prefix2[n] - prefix2[k]);
        let ss = (q1 - s1 * s1 / n1).max(0.0) + (q2 - s2 * s2 / n2).max(0.0);
        let pooled = ss / (n1 + n2 - 2.0);
        let diff = s1 / n1 - s2 / n2;
        let t = if pooled > 0.0 {
            diff.abs() / (pooled * (1.0 / n1 + 1.0 / n2)).sqrt()
        } else if diff != 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if best.is_none_or(|(_, bt)| t > bt) {
            best = Some((k, t));
        }
    }
    best
}

fn segment(x: &[f64], offset: usize, params: &StepParams, out: &mut Vec<usize>) {
    if let Some((k, t)) = best_split(x, params.min_segment) {
        if t > params.threshold {
            segment(&x[..k], offset, params, out);
            out.push(offset + k);
            segment(&x[k..], offset + k, params, out);
        }
    }
}

/// Recursive binary segmentation of the trace into constant levels.
pub fn classify_steps(trace: &TraceSeries, params: &StepParams) -> Result<StepClassification> {
    if !(params.threshold > 0.0) || params.min_segment == 0 {
        return Err(Error::invalid(
            "step threshold must be positive and minimum segment at least 1",
        ));
    }
    let mut idx = Vec::new();
    segment(&trace.intensity, 0, params, &mut idx);
    let step_times = idx.iter().map(|&i| trace.time(i)).collect();
    Ok(StepClassification {
        n_steps: idx.len(),
        step_indices: idx,
        step_times,
    })
}
