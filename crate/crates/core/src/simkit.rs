//! Photon-level synthetic datasets and spin-contrast normalization.
//!
//! Each sweep point is read out twice: once with the final π/2 pulse
//! projecting onto `m_s = 0` (F0 branch) and once onto `m_s = 1` (F1 branch).
//! With `p = (1 + C)/2` the per-shot photon means are `f1 + (f0 − f1)·p` and
//! `f1 + (f0 − f1)·(1 − p)`, and the totals over `reps` shots are Poisson.
//! Every point draws from its own ChaCha stream selected by its index, so a
//! dataset depends only on `(seed, inputs)` and not on evaluation order.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::noisebath::{coherence, NoiseSpectrum};
use crate::pulses::PulseSequence;
use crate::{Error, Result};

/// Bias field of the coherence measurements, gauss.
pub const DEFAULT_FIELD_GAUSS: f64 = 1750.0;

/// Photon statistics of the optical spin readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutModel {
    /// Mean detected photons per readout window in `m_s = 0`.
    pub f0: f64,
    /// Mean detected photons per readout window in `m_s = 1`.
    pub f1: f64,
    /// Readout window, s.
    pub t_read: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        ReadoutModel {
            f0: 0.063,
            f1: 0.048,
            t_read: 2.0e-6,
        }
    }
}

impl ReadoutModel {
    pub fn new(f0: f64, f1: f64, t_read: f64) -> Result<Self> {
        let m = ReadoutModel { f0, f1, t_read };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f1 > 0.0) || !(self.f0 > self.f1) || !self.f0.is_finite() {
            return Err(Error::invalid("readout requires f0 > f1 > 0"));
        }
        if !(self.t_read > 0.0) || !self.t_read.is_finite() {
            return Err(Error::invalid("readout window must be positive"));
        }
        Ok(())
    }

    /// Normalized contrast of a fully coherent spin, `2(f0 − f1)/(f0 + f1)`.
    pub fn ideal_contrast(&self) -> f64 {
        2.0 * (self.f0 - self.f1) / (self.f0 + self.f1)
    }

    /// Per-shot photon means `(F0 branch, F1 branch)` for coherence `c`.
    pub fn branch_means(&self, c: f64) -> (f64, f64) {
        let p = 0.5 * (1.0 + c);
        let d = self.f0 - self.f1;
        (self.f1 + d * p, self.f1 + d * (1.0 - p))
    }
}

/// One sweep point with raw photon totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataPoint {
    /// Total evolution time.
    pub sweep_time: OrderedTime,
    pub n_pulses: usize,
    pub f0_counts: u64,
    pub f1_counts: u64,
    pub reps: u64,
}

/// Evolution time in seconds with total ordering, so points can be sorted
/// and compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OrderedTime(u64);

impl OrderedTime {
    pub fn new(seconds: f64) -> Result<Self> {
        if !(seconds >= 0.0) || !seconds.is_finite() {
            return Err(Error::invalid("sweep time must be non-negative and finite"));
        }
        // Non-negative finite floats order like their bit patterns.
        Ok(OrderedTime((seconds + 0.0).to_bits()))
    }

    pub fn seconds(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl DataPoint {
    pub fn time(&self) -> f64 {
        self.sweep_time.seconds()
    }

    pub fn contrast(&self) -> Result<f64> {
        normalize_contrast(self.f0_counts as f64, self.f1_counts as f64)
    }

    /// Poisson-propagated variance of [`DataPoint::contrast`].
    pub fn contrast_variance(&self) -> f64 {
        contrast_variance(self.f0_counts as f64, self.f1_counts as f64)
    }
}

/// Raw photon-count dataset for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    pub points: Vec<DataPoint>,
    pub seed: u64,
    pub field_gauss: f64,
}

impl ExperimentDataset {
    /// Points sorted by `(n_pulses, time)`.
    pub fn canonicalize(&mut self) {
        self.points.sort_by_key(|p| (p.n_pulses, p.sweep_time));
    }

    /// Distinct pulse counts present, ascending.
    pub fn pulse_counts(&self) -> Vec<usize> {
        let mut n: Vec<usize> = self.points.iter().map(|p| p.n_pulses).collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    /// Points with `n_pulses == n`, sorted by time.
    pub fn family(&self, n: usize) -> Vec<DataPoint> {
        let mut pts: Vec<DataPoint> = self
            .points
            .iter()
            .filter(|p| p.n_pulses == n)
            .copied()
            .collect();
        pts.sort_by_key(|p| p.sweep_time);
        pts
    }
}

/// `2(F0 − F1)/(F0 + F1)`.
pub fn normalize_contrast(f0: f64, f1: f64) -> Result<f64> {
    let sum = f0 + f1;
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::invalid(
            "contrast undefined: F0 + F1 must be positive",
        ));
    }
    Ok(2.0 * (f0 - f1) / sum)
}

/// First-order variance of the contrast under independent Poisson totals,
/// `16·F0·F1/(F0 + F1)³`. A count of zero is floored at one photon.
pub fn contrast_variance(f0: f64, f1: f64) -> f64 {
    let (a, b) = (f0.max(1.0), f1.max(1.0));
    16.0 * a * b / (a + b).powi(3)
}

/// Sweep point to simulate: evolution time, pulse count and true coherence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherencePoint {
    pub time: f64,
    pub n_pulses: usize,
    pub coherence: f64,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-finite or non-positive means.
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

/// Photon totals for given coherence values. Point `i` uses stream `i` of a
/// ChaCha8 generator keyed by `seed`.
pub fn simulate_counts(
    points: &[CoherencePoint],
    readout: &ReadoutModel,
    reps: u64,
    seed: u64,
) -> Result<ExperimentDataset> {
    readout.validate()?;
    if reps == 0 {
        return Err(Error::invalid("need at least one repetition per point"));
    }
    let mut out = Vec::with_capacity(points.len());
    for (i, pt) in points.iter().enumerate() {
        if !(-1.0..=1.0).contains(&pt.coherence) {
            return Err(Error::invalid("coherence must lie in [-1, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (m0, m1) = readout.branch_means(pt.coherence);
        let r = reps as f64;
        out.push(DataPoint {
            sweep_time: OrderedTime::new(pt.time)?,
            n_pulses: pt.n_pulses,
            f0_counts: poisson(&mut rng, r * m0),
            f1_counts: poisson(&mut rng, r * m1),
            reps,
        });
    }
    Ok(ExperimentDataset {
        points: out,
        seed,
        field_gauss: DEFAULT_FIELD_GAUSS,
    })
}

/// Dynamical-decoupling dataset: one point per sequence, coherence from the
/// noise model.
pub fn simulate_dd_dataset(
    seqs: &[PulseSequence],
    model: &NoiseSpectrum,
    readout: &ReadoutModel,
    reps: u64,
    seed: u64,
) -> Result<ExperimentDataset> {
    readout.validate()?;
    let points = seqs
        .iter()
        .map(|s| {
            Ok(CoherencePoint {
                time: s.total_time(),
                n_pulses: s.n_pulses(),
                coherence: coherence(s, model)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    simulate_counts(&points, readout, reps, seed)
}

/// Relaxation dataset with contrast envelope `exp(−t/T1)`.
pub fn simulate_t1_dataset(
    t1: f64,
    times: &[f64],
    readout: &ReadoutModel,
    reps: u64,
    seed: u64,
) -> Result<ExperimentDataset> {
    if !(t1 > 0.0) || !t1.is_finite() {
        return Err(Error::invalid("T1 must be positive"));
    }
    let points = times
        .iter()
        .map(|&t| CoherencePoint {
            time: t,
            n_pulses: 0,
            coherence: (-t / t1).exp(),
        })
        .collect::<Vec<_>>();
    simulate_counts(&points, readout, reps, seed)
}
