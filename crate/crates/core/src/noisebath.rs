//! Parametric noise spectra and the decoherence functional.
//!
//! Spectra are one-sided densities of the NV frequency shift δω(t), in
//! rad²/s, normalized so that `(1/π)∫₀^∞ S(ω) dω` is the variance of δω. For
//! a Gaussian bath the accumulated phase under a sequence with filter
//! `|ỹ(ω)|²` has `⟨φ²⟩ = (1/π)∫₀^∞ S·|ỹ|² dω`, and the coherence is
//! `⟨cos φ⟩ = e^(−χ)` with `χ = ⟨φ²⟩/2`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::consts::{GAMMA_E, GAMMA_H, POWER_LAW_REF_OMEGA};
use crate::fieldcal;
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::pulses::{build_sequence, Family, PulseSequence, SequenceLabel};
use crate::quad::{self, QuadOptions};
use crate::{Error, Result};

/// Relative tolerance of the χ quadrature.
pub const CHI_REL_TOL: f64 = 1e-4;
/// Highest odd filter harmonic forced as a quadrature breakpoint.
pub const FORCED_HARMONICS: usize = 9;
/// Default proton correlation time (linewidth 1/τ_h).
pub const DEFAULT_TAU_H: f64 = 1e-6;
/// T₂ root search range, seconds.
pub const T2_SEARCH: (f64, f64) = (1e-9, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpectrum {
    /// Ornstein–Uhlenbeck noise: `S = V·2τ_c / (1 + (ωτ_c)²)`.
    Lorentzian {
        variance: f64,
        tau_c: f64,
    },
    /// `S = amplitude·(ω/ω₀)^(−exponent)` with ω₀ = 2π·1 MHz.
    PowerLaw {
        amplitude: f64,
        exponent: f64,
    },
    /// Precessing nuclear bath seen through the NV: a Lorentzian line of
    /// width `1/τ_h` at ±`center`, total variance `γ_e²·b_rms_sq`.
    ProtonBathPeak {
        b_rms_sq: f64,
        center: f64,
        tau_h: f64,
    },
    Sum(Vec<NoiseSpectrum>),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "{name} must be non-negative and finite, got {v}"
        )))
    }
}

impl NoiseSpectrum {
    pub fn lorentzian(variance: f64, tau_c: f64) -> Result<Self> {
        non_negative("variance", variance)?;
        positive("tau_c", tau_c)?;
        Ok(NoiseSpectrum::Lorentzian { variance, tau_c })
    }

    pub fn power_law(amplitude: f64, exponent: f64) -> Result<Self> {
        non_negative("amplitude", amplitude)?;
        if !exponent.is_finite() {
            return Err(Error::invalid("power-law exponent must be finite"));
        }
        Ok(NoiseSpectrum::PowerLaw {
            amplitude,
            exponent,
        })
    }

    /// Flat spectrum `S ≡ level` (a power law with zero exponent).
    pub fn white(level: f64) -> Result<Self> {
        Self::power_law(level, 0.0)
    }

    pub fn proton_peak(b_rms_sq: f64, center: f64, tau_h: f64) -> Result<Self> {
        non_negative("b_rms_sq", b_rms_sq)?;
        non_negative("center", center)?;
        positive("tau_h", tau_h)?;
        Ok(NoiseSpectrum::ProtonBathPeak {
            b_rms_sq,
            center,
            tau_h,
        })
    }

    /// Validate every parameter, recursing into sums.
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpectrum::Lorentzian { variance, tau_c } => {
                Self::lorentzian(variance, tau_c).map(|_| ())
            }
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
            } => Self::power_law(amplitude, exponent).map(|_| ()),
            NoiseSpectrum::ProtonBathPeak {
                b_rms_sq,
                center,
                tau_h,
            } => Self::proton_peak(b_rms_sq, center, tau_h).map(|_| ()),
            NoiseSpectrum::Sum(ref parts) => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    /// Multiply the spectrum by a non-negative constant.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            NoiseSpectrum::Lorentzian { variance, tau_c } => NoiseSpectrum::Lorentzian {
                variance: variance * factor,
                tau_c,
            },
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
            } => NoiseSpectrum::PowerLaw {
                amplitude: amplitude * factor,
                exponent,
            },
            NoiseSpectrum::ProtonBathPeak {
                b_rms_sq,
                center,
                tau_h,
            } => NoiseSpectrum::ProtonBathPeak {
                b_rms_sq: b_rms_sq * factor,
                center,
                tau_h,
            },
            NoiseSpectrum::Sum(ref parts) => {
                NoiseSpectrum::Sum(parts.iter().map(|p| p.scaled(factor)).collect())
            }
        }
    }

    /// True when the spectrum vanishes at every frequency.
    pub fn is_zero(&self) -> bool {
        match *self {
            NoiseSpectrum::Lorentzian { variance, .. } => variance == 0.0,
            NoiseSpectrum::PowerLaw { amplitude, .. } => amplitude == 0.0,
            NoiseSpectrum::ProtonBathPeak { b_rms_sq, .. } => b_rms_sq == 0.0,
            NoiseSpectrum::Sum(ref parts) => parts.iter().all(|p| p.is_zero()),
        }
    }

    /// `S(ω)` in rad²/s.
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::invalid("spectral density needs ω ≥ 0"));
        }
        Ok(self.density(omega))
    }

    pub(crate) fn density(&self, omega: f64) -> f64 {
        match *self {
            NoiseSpectrum::Lorentzian { variance, tau_c } => {
                let x = omega * tau_c;
                variance * 2.0 * tau_c / (1.0 + x * x)
            }
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
            } => {
                if amplitude == 0.0 {
                    0.0
                } else if exponent == 0.0 {
                    amplitude
                } else {
                    amplitude * (omega / POWER_LAW_REF_OMEGA).powf(-exponent)
                }
            }
            NoiseSpectrum::ProtonBathPeak {
                b_rms_sq,
                center,
                tau_h,
            } => {
                let lo = (omega - center) * tau_h;
                let hi = (omega + center) * tau_h;
                GAMMA_E * GAMMA_E * b_rms_sq * (tau_h / (1.0 + lo * lo) + tau_h / (1.0 + hi * hi))
            }
            NoiseSpectrum::Sum(ref parts) => parts.iter().map(|p| p.density(omega)).sum(),
        }
    }

    /// Highest line centre present in the model, rad/s.
    fn max_center(&self) -> f64 {
        match *self {
            NoiseSpectrum::ProtonBathPeak { center, .. } => center,
            NoiseSpectrum::Sum(ref parts) => {
                parts.iter().map(|p| p.max_center()).fold(0.0, f64::max)
            }
            _ => 0.0,
        }
    }

    /// Largest power-law exponent among non-zero parts.
    fn ir_exponent(&self) -> f64 {
        match *self {
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
            } if amplitude != 0.0 => exponent,
            NoiseSpectrum::Sum(ref parts) => parts
                .iter()
                .map(|p| p.ir_exponent())
                .fold(f64::NEG_INFINITY, f64::max),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Frequencies where the spectrum changes shape quickly.
    fn features(&self, out: &mut Vec<f64>) {
        match *self {
            NoiseSpectrum::Lorentzian { tau_c, .. } => {
                out.extend([0.1 / tau_c, 1.0 / tau_c, 10.0 / tau_c]);
            }
            NoiseSpectrum::PowerLaw { .. } => {}
            NoiseSpectrum::ProtonBathPeak { center, tau_h, .. } => {
                for k in [-10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0] {
                    out.push(center + k / tau_h);
                }
            }
            NoiseSpectrum::Sum(ref parts) => parts.iter().for_each(|p| p.features(out)),
        }
    }
}

/// Upper integration limit for χ: `max(100·N/t, 10·ω_c)`, with N ≥ 1.
pub fn chi_cutoff(seq: &PulseSequence, model: &NoiseSpectrum) -> f64 {
    let n = seq.n_pulses().max(1) as f64;
    (100.0 * n / seq.total_time()).max(10.0 * model.max_center())
}

/// `χ = (1/2π)∫₀^ω_max S(ω)·|ỹ(ω)|² dω`.
///
/// The range is pre-split into panels one oscillation (2π/t) wide, with
/// extra breakpoints at the odd filter harmonics `πkN/t` (k ≤ 9) and at the
/// spectral features of `model`.
pub fn chi(seq: &PulseSequence, model: &NoiseSpectrum) -> Result<f64> {
    model.validate()?;
    if model.is_zero() {
        return Ok(0.0);
    }
    let t = seq.total_time();
    // |ỹ|² → const (net phase) or ∝ ω² (balanced) as ω → 0.
    let balanced = seq.filter_weight(0.0) <= 1e-20 * t * t;
    let limit = if balanced { 3.0 } else { 1.0 };
    if model.ir_exponent() >= limit {
        return Err(Error::InvalidInput(alloc::format!(
            "power-law exponent {} makes χ diverge at low frequency for this sequence (needs < {limit})",
            model.ir_exponent()
        )));
    }
    let w_max = chi_cutoff(seq, model);
    let panel = 2.0 * PI / t;
    let n_panels = libm::ceil(w_max / panel) as usize;
    let mut points = Vec::with_capacity(n_panels + 32);
    points.extend((0..n_panels).map(|k| k as f64 * panel));
    points.push(w_max);
    if !matches!(
        seq.label(),
        SequenceLabel::FreeEvolution | SequenceLabel::Custom(_)
    ) {
        let centre = seq.filter_peak_frequency()?;
        points.extend((1..=FORCED_HARMONICS).step_by(2).map(|k| k as f64 * centre));
    }
    model.features(&mut points);
    points.retain(|&w| (0.0..=w_max).contains(&w));
    points.sort_by(f64::total_cmp);
    points.dedup();

    let opts = QuadOptions {
        rel_tol: CHI_REL_TOL,
        abs_tol: 0.0,
        max_intervals: 64 * points.len() + 20_000,
    };
    let q = quad::integrate(|w| model.density(w) * seq.filter_weight(w), &points, opts)?;
    Ok(q.value / (2.0 * PI))
}

/// Coherence `e^(−χ)`.
pub fn coherence(seq: &PulseSequence, model: &NoiseSpectrum) -> Result<f64> {
    Ok((-chi(seq, model)?).exp())
}

/// Sequence family plus pulse count, independent of total time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceSpec {
    pub family: Family,
    pub n_pulses: usize,
}

impl SequenceSpec {
    pub fn cpmg(n_pulses: usize) -> Self {
        SequenceSpec {
            family: Family::Cpmg,
            n_pulses,
        }
    }

    pub fn free() -> Self {
        SequenceSpec {
            family: Family::FreeEvolution,
            n_pulses: 0,
        }
    }

    pub fn echo() -> Self {
        SequenceSpec {
            family: Family::SpinEcho,
            n_pulses: 1,
        }
    }

    pub fn at(&self, total_time: f64) -> Result<PulseSequence> {
        build_sequence(self.family, self.n_pulses as i64, total_time)
    }
}

/// Coherence sampled along a sweep of total evolution time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceCurve {
    pub spec: SequenceSpec,
    pub times: Vec<f64>,
    pub coherence: Vec<f64>,
}

pub fn coherence_curve(
    spec: SequenceSpec,
    times: &[f64],
    model: &NoiseSpectrum,
) -> Result<CoherenceCurve> {
    let coherence = times
        .iter()
        .map(|&t| coherence(&spec.at(t)?, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceCurve {
        spec,
        times: times.to_vec(),
        coherence,
    })
}

/// Simulated T₂: the 1/e time, i.e. the root of `χ(t) = 1`.
///
/// The root is bracketed by doubling from 1 ns, then refined by geometric
/// bisection to a relative bracket width of 10⁻⁶.
pub fn t2_of_model(spec: SequenceSpec, model: &NoiseSpectrum) -> Result<f64> {
    if model.is_zero() {
        return Err(Error::invalid("T2 is undefined for a noiseless bath"));
    }
    let (lo_lim, hi_lim) = T2_SEARCH;
    let f = |t: f64| -> Result<f64> { Ok(chi(&spec.at(t)?, model)? - 1.0) };
    let mut lo = lo_lim;
    if f(lo)? >= 0.0 {
        return Err(Error::NoBracket {
            lo: lo_lim,
            hi: hi_lim,
        });
    }
    let mut hi = lo;
    loop {
        hi = (hi * 2.0).min(hi_lim);
        if f(hi)? >= 0.0 {
            break;
        }
        if hi >= hi_lim {
            return Err(Error::NoBracket {
                lo: lo_lim,
                hi: hi_lim,
            });
        }
        lo = hi;
    }
    while hi / lo - 1.0 > 1e-6 {
        let mid = (lo * hi).sqrt();
        if f(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Nuclear-spin noise of a semi-infinite proton bath at `depth` below an NV,
/// in a bias field `b0` along the NV axis.
pub fn proton_bath_spectrum(rho_h: f64, depth: f64, b0: f64, tau_h: f64) -> Result<NoiseSpectrum> {
    positive("rho_h", rho_h)?;
    positive("depth", depth)?;
    positive("B0", b0)?;
    positive("tau_h", tau_h)?;
    let b_rms_sq = fieldcal::brms_from_depth(depth, rho_h)?;
    NoiseSpectrum::proton_peak(b_rms_sq, GAMMA_H * b0, tau_h)
}
