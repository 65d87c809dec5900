//! Noise-spectrum samples from multi-pulse coherence decays.
//!
//! A CPMG(N) decay at total time `t` measures `χ = −ln C` with
//! `C` the contrast relative to its value at `t → 0`. Dividing by the
//! response `κ` of the same sequence to unit white noise gives an estimate of
//! `S` at the filter peak `πN/t`; for white noise the estimate is exact.

use alloc::vec::Vec;

use super::stretched::fit_stretched_exp;
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::noisebath::{chi, NoiseSpectrum, SequenceSpec};
use crate::simkit::ExperimentDataset;
use crate::{Error, Result};

/// Spectral density estimate at one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSample {
    /// Filter peak `πN/t`, rad/s.
    pub omega: f64,
    /// Estimated one-sided density, rad²/s.
    pub s: f64,
    pub n_pulses: usize,
    pub total_time: f64,
}

/// How the zero-time contrast of each pulse family is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContrastReference {
    /// Amplitude `A` of a stretched-exponential fit to the family.
    FitStretched,
    /// A known value, e.g. the readout model's ideal contrast.
    Known(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// Normalized contrast ≤ 0: the point is lost in noise.
    NoiseDominated,
    /// Normalized contrast ≥ 1: no measurable decay.
    NoDecay,
    /// Free evolution has no filter peak.
    NoFilterPeak,
    /// The family's reference contrast could not be fitted.
    ReferenceFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkippedProbe {
    pub n_pulses: usize,
    pub total_time: f64,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralDecomposition {
    /// Ordered by dataset, then pulse count, then time.
    pub samples: Vec<SpectrumSample>,
    pub skipped: Vec<SkippedProbe>,
    /// Reference contrast used for each `(dataset index, pulse count)`.
    pub references: Vec<(usize, usize, f64)>,
}

/// Spectrum estimate from one normalized contrast value.
pub fn estimate_sample(n_pulses: usize, total_time: f64, c_norm: f64) -> Result<SpectrumSample> {
    if n_pulses == 0 {
        return Err(Error::invalid("free evolution has no filter peak"));
    }
    if !(c_norm > 0.0 && c_norm < 1.0) {
        return Err(Error::invalid("normalized contrast must lie in (0, 1)"));
    }
    let seq = SequenceSpec::cpmg(n_pulses).at(total_time)?;
    let kappa = chi(&seq, &NoiseSpectrum::white(1.0)?)?;
    Ok(SpectrumSample {
        omega: seq.filter_peak_frequency()?,
        s: -c_norm.ln() / kappa,
        n_pulses,
        total_time,
    })
}

/// Decompose every CPMG family of every dataset into spectrum samples.
pub fn spectral_decompose(
    datasets: &[ExperimentDataset],
    reference: ContrastReference,
) -> Result<SpectralDecomposition> {
    if let ContrastReference::Known(c0) = reference {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::invalid("reference contrast must be positive"));
        }
    }
    let mut out = SpectralDecomposition::default();
    for (di, ds) in datasets.iter().enumerate() {
        for n in ds.pulse_counts() {
            let pts = ds.family(n);
            let skip_all = |out: &mut SpectralDecomposition, reason| {
                for p in &pts {
                    out.skipped.push(SkippedProbe {
                        n_pulses: n,
                        total_time: p.time(),
                        reason,
                    });
                }
            };
            if n == 0 {
                skip_all(&mut out, SkipReason::NoFilterPeak);
                continue;
            }
            let mut times = Vec::with_capacity(pts.len());
            let mut contrast = Vec::with_capacity(pts.len());
            let mut weights = Vec::with_capacity(pts.len());
            for p in &pts {
                times.push(p.time());
                contrast.push(p.contrast()?);
                weights.push(1.0 / p.contrast_variance());
            }
            let c0 = match reference {
                ContrastReference::Known(c0) => c0,
                ContrastReference::FitStretched => {
                    match fit_stretched_exp(&times, &contrast, Some(&weights)) {
                        Ok(f) if f.param("A").is_some_and(|a| a > 0.0) => {
                            f.param("A").unwrap_or(0.0)
                        }
                        Ok(_) | Err(Error::FitNonConvergence { .. } | Error::Degenerate(_)) => {
                            skip_all(&mut out, SkipReason::ReferenceFailed);
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            out.references.push((di, n, c0));
            for (&t, &c) in times.iter().zip(&contrast) {
                let c_norm = c / c0;
                let reason = if c_norm <= 0.0 {
                    SkipReason::NoiseDominated
                } else if c_norm >= 1.0 {
                    SkipReason::NoDecay
                } else {
                    out.samples.push(estimate_sample(n, t, c_norm)?);
                    continue;
                };
                out.skipped.push(SkippedProbe {
                    n_pulses: n,
                    total_time: t,
                    reason,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisebath::coherence;

    #[test]
    fn white_noise_is_exact() {
        let white = NoiseSpectrum::white(2.0e4).unwrap();
        for (n, t) in [(8usize, 20e-6), (64, 40e-6), (512, 160e-6)] {
            let seq = SequenceSpec::cpmg(n).at(t).unwrap();
            let c = coherence(&seq, &white).unwrap();
            let s = estimate_sample(n, t, c).unwrap();
            assert!((s.s / 2.0e4 - 1.0).abs() < 1e-3, "{n} {t}: {}", s.s);
            assert!((s.omega - core::f64::consts::PI * n as f64 / t).abs() < 1e-6 * s.omega);
        }
    }

    #[test]
    fn rejects_out_of_range_contrast() {
        assert!(estimate_sample(8, 1e-5, 0.0).is_err());
        assert!(estimate_sample(8, 1e-5, 1.0).is_err());
        assert!(estimate_sample(0, 1e-5, 0.5).is_err());
    }
}
