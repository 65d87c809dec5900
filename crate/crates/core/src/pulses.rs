//! Ideal π-pulse sequences and their filter functions.
//!
//! A sequence of instantaneous π pulses turns the phase picked up by the
//! qubit into `φ = ∫₀ᵗ y(t′)·δω(t′) dt′`, where the toggling function `y`
//! starts at +1 and flips sign at every pulse. The filter weight at angular
//! frequency ω is `|ỹ(ω)|²` with `ỹ(ω) = ∫₀ᵗ y(t′)·e^(−iωt′) dt′`.
//!
//! Pulse phases (XY, YY, ...) do not enter the ideal filter, so a
//! `(YY-8)_N` train is represented by its timing alone, i.e. `CPMG(8N)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Below this value of `ω·total_time` the transform is evaluated by its
/// Taylor series instead of the exponential sum.
pub const SMALL_PHASE: f64 = 1e-6;

/// Sequence family as requested by a caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    FreeEvolution,
    SpinEcho,
    Cpmg,
}

/// Label of a constructed sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceLabel {
    FreeEvolution,
    SpinEcho,
    Cpmg(usize),
    /// Arbitrary pulse times; not equally spaced in general.
    Custom(usize),
}

impl SequenceLabel {
    pub fn n_pulses(&self) -> usize {
        match *self {
            SequenceLabel::FreeEvolution => 0,
            SequenceLabel::SpinEcho => 1,
            SequenceLabel::Cpmg(n) | SequenceLabel::Custom(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    total_time: f64,
    pulse_times: Vec<f64>,
    label: SequenceLabel,
}

/// Build a sequence of `n_pulses` equally spaced π pulses over `total_time`
/// seconds, with pulse `k` (1-based) at `(k − ½)·total_time/n`.
///
/// Zero pulses always yields free evolution. A spin echo must have exactly
/// one pulse.
pub fn build_sequence(family: Family, n_pulses: i64, total_time: f64) -> Result<PulseSequence> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(Error::invalid("total_time must be positive and finite"));
    }
    if n_pulses < 0 {
        return Err(Error::invalid("pulse count must be non-negative"));
    }
    let n = n_pulses as usize;
    let label = match (family, n) {
        (_, 0) => SequenceLabel::FreeEvolution,
        (Family::FreeEvolution, _) => {
            return Err(Error::invalid("free evolution carries no pulses"));
        }
        (Family::SpinEcho, 1) => SequenceLabel::SpinEcho,
        (Family::SpinEcho, _) => return Err(Error::invalid("spin echo has exactly one pulse")),
        (Family::Cpmg, n) => SequenceLabel::Cpmg(n),
    };
    let spacing = total_time / n as f64;
    let pulse_times = (0..n).map(|k| (k as f64 + 0.5) * spacing).collect();
    Ok(PulseSequence {
        total_time,
        pulse_times,
        label,
    })
}

/// `(YY-8)_N`: `n_blocks` blocks of eight π pulses.
pub fn yy8(n_blocks: usize, total_time: f64) -> Result<PulseSequence> {
    build_sequence(Family::Cpmg, 8 * n_blocks as i64, total_time)
}

impl PulseSequence {
    /// Sequence with arbitrary pulse times, labelled [`SequenceLabel::Custom`].
    pub fn from_pulse_times(total_time: f64, pulse_times: Vec<f64>) -> Result<Self> {
        if !(total_time > 0.0) || !total_time.is_finite() {
            return Err(Error::invalid("total_time must be positive and finite"));
        }
        let mut prev = 0.0;
        for &t in &pulse_times {
            if !(t > prev) || !(t < total_time) {
                return Err(Error::invalid(
                    "pulse times must be strictly increasing inside (0, total_time)",
                ));
            }
            prev = t;
        }
        let label = match pulse_times.len() {
            0 => SequenceLabel::FreeEvolution,
            n => SequenceLabel::Custom(n),
        };
        Ok(PulseSequence {
            total_time,
            pulse_times,
            label,
        })
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn pulse_times(&self) -> &[f64] {
        &self.pulse_times
    }

    pub fn label(&self) -> SequenceLabel {
        self.label
    }

    pub fn n_pulses(&self) -> usize {
        self.pulse_times.len()
    }

    /// Same pulse pattern stretched in time by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::invalid("time scale factor must be positive"));
        }
        Ok(PulseSequence {
            total_time: self.total_time * factor,
            pulse_times: self.pulse_times.iter().map(|t| t * factor).collect(),
            label: self.label,
        })
    }

    /// Value of the toggling function at time `t` (`+1` before the first pulse).
    pub fn toggling(&self, t: f64) -> f64 {
        let flips = self.pulse_times.partition_point(|&p| p <= t);
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `ỹ(ω) = ∫₀ᵗ y(t′)·e^(−iωt′) dt′`, in seconds.
    ///
    /// Evaluated as a sum over the sign-change boundaries,
    /// `ỹ = [1 + 2Σⱼ(−1)ʲe^(−iωtⱼ) − (−1)ᴺe^(−iωt)] / (iω)`, or by a fourth-order
    /// series when `ω·t` is below [`SMALL_PHASE`].
    pub fn modulation_transform(&self, omega: f64) -> Complex64 {
        let omega = omega.abs();
        let t = self.total_time;
        if omega * t < SMALL_PHASE {
            return self.transform_series(omega);
        }
        let n = self.pulse_times.len();
        let mut boundary = Complex64::new(1.0, 0.0);
        if n > 0 {
            let mut alternating = Complex64::new(0.0, 0.0);
            if self.is_uniform() {
                let spacing = t / n as f64;
                let step = Complex64::from_polar(1.0, -omega * spacing);
                let mut phasor = Complex64::from_polar(1.0, -0.5 * omega * spacing);
                let mut sign = -1.0;
                for _ in 0..n {
                    alternating += phasor * sign;
                    phasor *= step;
                    sign = -sign;
                }
            } else {
                let mut sign = -1.0;
                for &tp in &self.pulse_times {
                    alternating += Complex64::from_polar(sign, -omega * tp);
                    sign = -sign;
                }
            }
            boundary += alternating * 2.0;
        }
        let last_sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        boundary -= Complex64::from_polar(last_sign, -omega * t);
        boundary / Complex64::new(0.0, omega)
    }

    fn is_uniform(&self) -> bool {
        matches!(self.label, SequenceLabel::SpinEcho | SequenceLabel::Cpmg(_))
    }

    /// Segment-wise Taylor expansion of `∫ e^(−iωt′) dt′` to fourth order in ω.
    fn transform_series(&self, omega: f64) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut start = 0.0;
        let mut sign = 1.0;
        let ends = self
            .pulse_times
            .iter()
            .copied()
            .chain(core::iter::once(self.total_time));
        for end in ends {
            // Σ_m (−iω)^m (b^{m+1} − a^{m+1}) / (m+1)!
            let mut coeff = Complex64::new(1.0, 0.0);
            let mut pa = start;
            let mut pb = end;
            let mut fact = 1.0;
            let mut seg = Complex64::new(0.0, 0.0);
            for m in 0..5 {
                fact *= (m + 1) as f64;
                seg += coeff * ((pb - pa) / fact);
                coeff *= Complex64::new(0.0, -omega);
                pa *= start;
                pb *= end;
            }
            sum += seg * sign;
            sign = -sign;
            start = end;
        }
        sum
    }

    /// `|ỹ(ω)|²`, in s².
    ///
    /// Evenly spaced trains use the closed form
    /// `16·sin⁴(x/4)·g²/(ω²·cos²(x/2))` with `x = ωt/N` and `g = sin(ωt/2)`
    /// (`N` even) or `cos(ωt/2)` (`N` odd), away from the removable
    /// singularities at the filter peaks.
    pub fn filter_weight(&self, omega: f64) -> f64 {
        let omega = omega.abs();
        let t = self.total_time;
        let n = self.pulse_times.len();
        if self.is_uniform() && omega * t >= SMALL_PHASE {
            let x = omega * t / n as f64;
            let c = (0.5 * x).cos();
            if c.abs() > 1e-4 {
                let s = (0.25 * x).sin();
                let g = if n.is_multiple_of(2) {
                    (0.5 * omega * t).sin()
                } else {
                    (0.5 * omega * t).cos()
                };
                let r = s * s * g / (c * omega);
                return 16.0 * r * r;
            }
        }
        self.modulation_transform(omega).norm_sqr()
    }

    /// Main passband centre `π·N/t` of an `N`-pulse CPMG train, rad/s.
    pub fn filter_peak_frequency(&self) -> Result<f64> {
        match self.label {
            SequenceLabel::FreeEvolution => {
                Err(Error::invalid("free evolution has no filter passband"))
            }
            SequenceLabel::Custom(_) => Err(Error::invalid(
                "passband centre is only defined for equally spaced trains",
            )),
            SequenceLabel::SpinEcho | SequenceLabel::Cpmg(_) => {
                Ok(PI * self.n_pulses() as f64 / self.total_time)
            }
        }
    }
}

/// Scalar filter value at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterWeight {
    pub omega: f64,
    pub weight: f64,
}

impl PulseSequence {
    /// Filter weights on a frequency grid.
    pub fn filter_weights(&self, omegas: &[f64]) -> Vec<FilterWeight> {
        omegas
            .iter()
            .map(|&omega| FilterWeight {
                omega,
                weight: self.filter_weight(omega),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const US: f64 = 1e-6;

    #[test]
    fn cpmg_64_first_pulse() {
        let seq = build_sequence(Family::Cpmg, 64, 100.0 * US).unwrap();
        assert_eq!(seq.n_pulses(), 64);
        assert!((seq.pulse_times()[0] - 0.781_25 * US).abs() < 1e-18);
        assert_eq!(seq.label(), SequenceLabel::Cpmg(64));
    }

    #[test]
    fn spin_echo_midpoint() {
        let seq = build_sequence(Family::SpinEcho, 1, 10.0 * US).unwrap();
        assert_eq!(seq.pulse_times(), &[5.0 * US]);
    }

    #[test]
    fn yy8_blocks_are_eight_pulse_units() {
        let seq = yy8(8, 64.0 * US).unwrap();
        assert_eq!(seq.n_pulses(), 64);
        let block = build_sequence(Family::Cpmg, 8, 8.0 * US).unwrap();
        // Every block of the long train is the 8-pulse unit shifted by 8 µs.
        for b in 0..8 {
            for k in 0..8 {
                let t = seq.pulse_times()[8 * b + k] - 8.0 * US * b as f64;
                assert!((t - block.pulse_times()[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_pulses_is_free_evolution() {
        let seq = build_sequence(Family::Cpmg, 0, 1.0).unwrap();
        assert_eq!(seq.label(), SequenceLabel::FreeEvolution);
        assert!(seq.filter_peak_frequency().is_err());
    }

    #[test]
    fn invalid_arguments() {
        assert!(build_sequence(Family::Cpmg, 4, 0.0).is_err());
        assert!(build_sequence(Family::Cpmg, 4, -1.0).is_err());
        assert!(build_sequence(Family::Cpmg, -1, 1.0).is_err());
        assert!(build_sequence(Family::SpinEcho, 2, 1.0).is_err());
        assert!(PulseSequence::from_pulse_times(1.0, vec![0.5, 0.4]).is_err());
        assert!(PulseSequence::from_pulse_times(1.0, vec![1.0]).is_err());
    }

    #[test]
    fn free_evolution_closed_form() {
        let t = 10.0 * US;
        let seq = build_sequence(Family::FreeEvolution, 0, t).unwrap();
        for &w in &[1e3, 1e5, 3.3e5, 2e6, 7.7e7] {
            let s = libm::sin(w * t / 2.0);
            let expect = 4.0 * s * s / (w * w);
            let got = seq.filter_weight(w);
            assert!(
                (got - expect).abs() <= 1e-9 * expect.max(1e-30),
                "{w}: {got} vs {expect}"
            );
        }
        let full = 2.0 * PI / t;
        assert!(seq.filter_weight(full) < 1e-20 * t * t);
    }

    #[test]
    fn zero_frequency_limits() {
        let t = 3.0 * US;
        let free = build_sequence(Family::FreeEvolution, 0, t).unwrap();
        let echo = build_sequence(Family::SpinEcho, 1, t).unwrap();
        assert!((free.filter_weight(0.0) - t * t).abs() < 1e-12 * t * t);
        assert!(echo.filter_weight(0.0) < 1e-30);
        assert!(echo.modulation_transform(1e-3).norm() < 1e-9 * t);
    }

    #[test]
    fn spin_echo_closed_form() {
        // |ỹ|² = 16 sin⁴(ωt/4)/ω² for a single centred pulse.
        let t = 10.0 * US;
        let seq = build_sequence(Family::SpinEcho, 1, t).unwrap();
        for &w in &[2.0 * PI / t, 1e4, 4e5, 9e6] {
            let s = libm::sin(w * t / 4.0);
            let expect = 16.0 * s.powi(4) / (w * w);
            let got = seq.filter_weight(w);
            assert!(
                (got - expect).abs() <= 1e-9 * expect,
                "{w}: {got} vs {expect}"
            );
        }
        let w = 2.0 * PI / t;
        assert!((seq.filter_weight(w) - 4.0 * t * t / (PI * PI)).abs() < 1e-9 * t * t);
    }

    #[test]
    fn series_matches_sum_at_threshold() {
        let seq = build_sequence(Family::Cpmg, 3, 5.0 * US).unwrap();
        let w = SMALL_PHASE / seq.total_time();
        let series = seq.transform_series(w);
        let sum = seq.modulation_transform(w * 1.000_001);
        assert!((series - sum).norm() < 1e-9 * seq.total_time());
    }

    #[test]
    fn uniform_fast_path_matches_general_path() {
        let t = 40.0 * US;
        let seq = build_sequence(Family::Cpmg, 24, t).unwrap();
        let custom = PulseSequence::from_pulse_times(t, seq.pulse_times().to_vec()).unwrap();
        for k in 1..40 {
            let w = 0.37e6 * k as f64;
            let a = seq.modulation_transform(w);
            let b = custom.modulation_transform(w);
            assert!((a - b).norm() <= 1e-11 * t, "{w}");
        }
    }

    #[test]
    fn closed_form_weight_matches_boundary_sum() {
        for n in [1usize, 2, 7, 64, 513] {
            let t = 30.0 * US;
            let seq = build_sequence(Family::Cpmg, n as i64, t).unwrap();
            let peak = core::f64::consts::PI * n as f64 / t;
            for k in 1..400 {
                // Includes points just off the odd harmonics.
                let w = peak * (k as f64 * 0.0125) * (1.0 + 3e-5);
                let a = seq.filter_weight(w);
                let b = seq.modulation_transform(w).norm_sqr();
                assert!(
                    (a - b).abs() <= 1e-9 * b.max(1e-6 * t * t),
                    "n={n} w={w}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn peak_frequency() {
        let seq = build_sequence(Family::Cpmg, 64, 64.0 * US).unwrap();
        assert!((seq.filter_peak_frequency().unwrap() - PI * 1e6).abs() < 1e-6);
        let seq = build_sequence(Family::Cpmg, 1, 10.0 * US).unwrap();
        assert!((seq.filter_peak_frequency().unwrap() - PI * 1e5).abs() < 1e-9);
    }

    #[test]
    fn toggling_function_signs() {
        let seq = build_sequence(Family::Cpmg, 2, 4.0).unwrap();
        assert_eq!(seq.toggling(0.5), 1.0);
        assert_eq!(seq.toggling(1.5), -1.0);
        assert_eq!(seq.toggling(3.5), 1.0);
    }
}
