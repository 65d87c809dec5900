//! Geometry-to-field calculators: proton-noise depth calibration, dipolar
//! couplings, Larmor frequencies and the single-¹³C integration budget.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consts::{
    nv_axis_tilt_100, C13_ABUNDANCE, GAMMA_C13, GAMMA_E, GAMMA_H, HBAR, MU0_OVER_4PI,
};
use crate::fitcore::SpectrumSample;
#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::noisebath::{chi, NoiseSpectrum, SequenceSpec};
use crate::quad::{self, QuadOptions};
use crate::{Error, Result};

/// Proton Larmor frequency `γ_H·B0`, rad/s.
pub fn proton_larmor(b0: f64) -> Result<f64> {
    if !(b0 >= 0.0) || !b0.is_finite() {
        return Err(Error::invalid("B0 must be non-negative"));
    }
    Ok(GAMMA_H * b0)
}

/// Squared dipolar prefactor of one proton, `(μ₀ħγ_H/4π)²`, T²·m⁶.
fn proton_dipole_sq() -> f64 {
    let m = MU0_OVER_4PI * HBAR * GAMMA_H;
    m * m
}

/// Unit vector of an NV axis tilted by `tilt` from the surface normal, in the x–z plane.
fn nv_axis(tilt: f64) -> [f64; 3] {
    [tilt.sin(), 0.0, tilt.cos()]
}

/// Angular kernel of the Larmor-frequency field variance along the NV axis for
/// a spin-½ proton in direction `dir`: `(9/4)·c²·(1 − c²)` with `c = dir·axis`.
pub fn proton_angular_kernel(dir: [f64; 3], axis: [f64; 3]) -> f64 {
    let c = dir[0] * axis[0] + dir[1] * axis[1] + dir[2] * axis[2];
    2.25 * c * c * (1.0 - c * c)
}

/// Dimensionless half-space integral `∫ (cos³θ/3)·kernel dΩ` over the upper
/// hemisphere for an NV axis tilted by `tilt`.
pub fn half_space_angular_integral(tilt: f64) -> Result<f64> {
    let axis = nv_axis(tilt);
    let opts = QuadOptions {
        rel_tol: 1e-11,
        abs_tol: 1e-16,
        max_intervals: 10_000,
    };
    let outer = quad::integrate(
        |theta| {
            let (st, ct) = (theta.sin(), theta.cos());
            let inner = quad::integrate(
                |phi| {
                    let dir = [st * phi.cos(), st * phi.sin(), ct];
                    proton_angular_kernel(dir, axis)
                },
                &[0.0, PI / 2.0, PI],
                opts,
            )
            .map(|q| 2.0 * q.value)
            .unwrap_or(f64::NAN);
            ct * ct * ct / 3.0 * inner * st
        },
        &[0.0, PI / 4.0, PI / 2.0],
        opts,
    )?;
    if !outer.value.is_finite() {
        return Err(Error::invalid("angular integral diverged"));
    }
    Ok(outer.value)
}

static BRMS_CONSTANT: AtomicU64 = AtomicU64::new(0);

/// `K` in `B_rms² = K·ρ_H/d³` for an NV at depth `d` under a semi-infinite
/// proton bath, NV axis at 54.74° to the surface normal ((100) cut), secular
/// field variance at the proton Larmor frequency. Units T²·m⁶.
///
/// Evaluated once by quadrature and cached.
pub fn brms_constant() -> f64 {
    let cached = BRMS_CONSTANT.load(Ordering::Relaxed);
    if cached != 0 {
        return f64::from_bits(cached);
    }
    let k = proton_dipole_sq()
        * half_space_angular_integral(nv_axis_tilt_100()).expect("smooth integrand converges");
    BRMS_CONSTANT.store(k.to_bits(), Ordering::Relaxed);
    k
}

/// Closed form `(μ₀ħγ_H/4π)²·5π/96` for the same geometry.
pub fn brms_constant_closed_form() -> f64 {
    proton_dipole_sq() * 5.0 * PI / 96.0
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// `B_rms² = K·ρ_H/d³`, T².
pub fn brms_from_depth(depth: f64, rho_h: f64) -> Result<f64> {
    check_positive("depth", depth)?;
    check_positive("rho_h", rho_h)?;
    Ok(brms_constant() * rho_h / (depth * depth * depth))
}

/// `d = (K·ρ_H/B_rms²)^(1/3)`, metres.
pub fn depth_from_brms(b_rms_sq: f64, rho_h: f64) -> Result<f64> {
    check_positive("b_rms_sq", b_rms_sq)?;
    check_positive("rho_h", rho_h)?;
    Ok((brms_constant() * rho_h / b_rms_sq).cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEstimate {
    pub depth: f64,
    pub b_rms_sq: f64,
    pub rho_h: f64,
}

/// Amplitude of a proton line recovered from spectral samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtonPeakFit {
    /// Fitted `B_rms²`, T².
    pub b_rms_sq: f64,
    /// Flat background under the line, rad²/s.
    pub background: f64,
    /// Probes that entered the fit.
    pub n_probes: usize,
}

/// Recover the proton-line strength from decomposed spectrum samples.
///
/// Every sample is a filter-weighted average of the true spectrum, so the
/// line is not read off point by point. Instead each probe's response to a
/// unit line (`B_rms² = 1 T²`, same centre and width) is computed through
/// the same estimator, and the samples are matched by linear least squares
/// to `b·response + background`. On a pure line this recovers `B_rms²`
/// exactly, independent of how the probes sample the peak.
pub fn fit_proton_peak(
    samples: &[SpectrumSample],
    center: f64,
    tau_h: f64,
) -> Result<ProtonPeakFit> {
    if samples.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: samples.len(),
        });
    }
    let unit = NoiseSpectrum::proton_peak(1.0, center, tau_h)?;
    let white = NoiseSpectrum::white(1.0)?;
    let mut response = Vec::with_capacity(samples.len());
    for s in samples {
        let seq = SequenceSpec::cpmg(s.n_pulses).at(s.total_time)?;
        let kappa = chi(&seq, &white)?;
        response.push(chi(&seq, &unit)? / kappa);
    }
    // Normal equations for y = b·g + c.
    let n = samples.len() as f64;
    let (mut sg, mut sy, mut sgg, mut sgy) = (0.0, 0.0, 0.0, 0.0);
    for (s, &g) in samples.iter().zip(&response) {
        sg += g;
        sy += s.s;
        sgg += g * g;
        sgy += g * s.s;
    }
    let det = n * sgg - sg * sg;
    if !(det.abs() > 1e-12 * n * sgg) {
        return Err(Error::Degenerate(
            "probes do not resolve the proton line from the background".into(),
        ));
    }
    let b = (n * sgy - sg * sy) / det;
    let c = (sy - b * sg) / n;
    if !(b > 0.0) {
        return Err(Error::Degenerate("no proton line above background".into()));
    }
    Ok(ProtonPeakFit {
        b_rms_sq: b,
        background: c,
        n_probes: samples.len(),
    })
}

/// Depth from decomposed proton-line samples.
pub fn depth_from_samples(
    samples: &[SpectrumSample],
    rho_h: f64,
    b0: f64,
    tau_h: f64,
) -> Result<DepthEstimate> {
    let center = proton_larmor(b0)?;
    let fit = fit_proton_peak(samples, center, tau_h)?;
    let depth = depth_from_brms(fit.b_rms_sq, rho_h)?;
    Ok(DepthEstimate {
        depth,
        b_rms_sq: fit.b_rms_sq,
        rho_h,
    })
}

/// Dipolar prefactor `(μ₀/4π)·γ_e·γ_C·ħ/r³`, rad/s.
fn c13_prefactor(distance: f64) -> f64 {
    MU0_OVER_4PI * GAMMA_E * GAMMA_C13 * HBAR / (distance * distance * distance)
}

/// RMS secular NV–¹³C coupling at `distance`, averaged over orientations:
/// the angular factor `(1 − 3cos²θ)` has mean square 4/5 on the sphere.
pub fn c13_coupling(distance: f64) -> Result<f64> {
    check_positive("distance", distance)?;
    Ok(c13_prefactor(distance) * (0.8f64).sqrt())
}

/// Parameters of a carbon-bearing target volume above the diamond surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MolecularVolume {
    /// Distance from NV to the bottom face of the volume, m.
    pub standoff: f64,
    /// Edge of the cubic volume, m.
    pub edge: f64,
    /// Carbon number density, m⁻³.
    pub carbon_density: f64,
    /// ¹³C fraction.
    pub abundance: f64,
}

impl MolecularVolume {
    /// Protein-like carbon density (~3.5×10²⁸ m⁻³) at natural abundance.
    pub fn protein(standoff: f64, edge: f64) -> Self {
        MolecularVolume {
            standoff,
            edge,
            carbon_density: 3.5e28,
            abundance: C13_ABUNDANCE,
        }
    }
}

/// Monte Carlo coupling statistics for ¹³C spins placed in a molecular volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeCoupling {
    /// RMS secular coupling over sampled ¹³C placements, rad/s.
    pub rms_coupling: f64,
    /// Expected number of ¹³C spins in the volume.
    pub expected_spins: f64,
}

/// Average the secular coupling over uniformly placed ¹³C spins in a cube
/// centred laterally above the NV (axis tilted 54.74°, (100) surface).
pub fn c13_coupling_volume_mc(
    volume: MolecularVolume,
    samples: usize,
    seed: u64,
) -> Result<VolumeCoupling> {
    check_positive("standoff", volume.standoff)?;
    check_positive("edge", volume.edge)?;
    check_positive("carbon_density", volume.carbon_density)?;
    if !(0.0..=1.0).contains(&volume.abundance) {
        return Err(Error::invalid("abundance must lie in [0, 1]"));
    }
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let axis = nv_axis(nv_axis_tilt_100());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = MU0_OVER_4PI * GAMMA_E * GAMMA_C13 * HBAR;
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = (rng.random::<f64>() - 0.5) * volume.edge;
        let y = (rng.random::<f64>() - 0.5) * volume.edge;
        let z = volume.standoff + rng.random::<f64>() * volume.edge;
        let r2 = x * x + y * y + z * z;
        let r = r2.sqrt();
        let c = (x * axis[0] + y * axis[1] + z * axis[2]) / r;
        let a = base * (1.0 - 3.0 * c * c) / (r2 * r);
        acc += a * a;
    }
    let expected = volume.carbon_density * volume.abundance * volume.edge.powi(3);
    Ok(VolumeCoupling {
        rms_coupling: (acc / samples as f64).sqrt(),
        expected_spins: expected,
    })
}

/// Inputs to the single-target-spin integration-time estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingBudget {
    /// Mean photons per readout, m_s = 0.
    pub f0: f64,
    /// Mean photons per readout, m_s = 1.
    pub f1: f64,
    /// Readout window, s.
    pub t_read: f64,
    /// Coherence time, s.
    pub t2: f64,
    /// Stretch exponent of the coherence envelope.
    pub stretch: f64,
    /// Coupling to the target spin, rad/s.
    pub coupling: f64,
    pub snr_target: f64,
    /// Quantum-logic repetitions (divides the required time).
    pub n_logic: u32,
}

impl SensingBudget {
    pub fn validate(&self) -> Result<()> {
        check_positive("f1", self.f1)?;
        if !(self.f0 > self.f1) || !self.f0.is_finite() {
            return Err(Error::invalid("f0 must exceed f1"));
        }
        check_positive("t_read", self.t_read)?;
        check_positive("T2", self.t2)?;
        check_positive("stretch exponent", self.stretch)?;
        check_positive("snr_target", self.snr_target)?;
        if !self.coupling.is_finite() {
            return Err(Error::invalid("coupling must be finite"));
        }
        if self.n_logic < 1 {
            return Err(Error::invalid("n_logic must be at least 1"));
        }
        Ok(())
    }

    /// Per-shot signal `((f0 − f1)/2)·exp[−(τ/T2)^n]·|sin(Aτ)|`.
    pub fn signal_per_shot(&self, tau: f64) -> f64 {
        let envelope = (-(tau / self.t2).powf(self.stretch)).exp();
        0.5 * (self.f0 - self.f1) * envelope * (self.coupling * tau).sin().abs()
    }

    /// Per-shot photon-noise variance `(f0 + f1)/2`.
    pub fn noise_variance_per_shot(&self) -> f64 {
        0.5 * (self.f0 + self.f1)
    }

    /// Total time to reach `snr_target` at accumulation time `tau`, before the
    /// quantum-logic gain.
    pub fn time_at(&self, tau: f64) -> f64 {
        let s = self.signal_per_shot(tau);
        if s <= 0.0 {
            return f64::INFINITY;
        }
        self.snr_target * self.snr_target * (tau + self.t_read) * self.noise_variance_per_shot()
            / (s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationTime {
    /// Optimal phase-accumulation time, s.
    pub tau_opt: f64,
    /// Required total measurement time including the quantum-logic gain, s.
    pub t_required: f64,
    /// Same without the quantum-logic gain, s.
    pub t_single: f64,
}

/// Points on the coarse log grid for τ.
const TAU_GRID: usize = 400;

/// Minimize the required time over τ ∈ [0.01·T2, 5·T2]: coarse log grid, then
/// golden-section refinement in log τ around the best node.
pub fn integration_time(budget: &SensingBudget) -> Result<IntegrationTime> {
    budget.validate()?;
    let (lo, hi) = ((0.01 * budget.t2).ln(), (5.0 * budget.t2).ln());
    let step = (hi - lo) / (TAU_GRID - 1) as f64;
    let cost = |x: f64| budget.time_at(x.exp());
    let mut best = (0usize, f64::INFINITY);
    for i in 0..TAU_GRID {
        let v = cost(lo + step * i as f64);
        if v < best.1 {
            best = (i, v);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::TargetInvisible);
    }
    let mut a = lo + step * best.0.saturating_sub(1) as f64;
    let mut b = (lo + step * (best.0 + 1) as f64).min(hi);
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
    }
    let x = 0.5 * (a + b);
    let (x, t_single) = if cost(x) <= best.1 {
        (x, cost(x))
    } else {
        (lo + step * best.0 as f64, best.1)
    };
    Ok(IntegrationTime {
        tau_opt: x.exp(),
        t_single,
        t_required: t_single / budget.n_logic as f64,
    })
}

/// Search grid for [`calibrate_budget`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGrid {
    pub snr_targets: Vec<f64>,
    pub t_reads: Vec<f64>,
    pub stretches: Vec<f64>,
}

impl Default for CalibrationGrid {
    /// snr ∈ {1, 1.5, …, 10}, t_read ∈ {1, 1.5, …, 5} µs, n ∈ {1.0, 1.1, …, 1.8}.
    fn default() -> Self {
        CalibrationGrid {
            snr_targets: (0..=18).map(|k| 1.0 + 0.5 * k as f64).collect(),
            t_reads: (0..=8).map(|k| (1.0 + 0.5 * k as f64) * 1e-6).collect(),
            stretches: (0..=8).map(|k| 1.0 + 0.1 * k as f64).collect(),
        }
    }
}

/// Grid-search `(snr_target, t_read, stretch)` so that `integration_time`
/// with `n_logic = 1` hits `target_seconds`. Ties keep the first grid node in
/// (snr, t_read, n) order. Returns the calibrated budget.
pub fn calibrate_budget(
    base: &SensingBudget,
    target_seconds: f64,
    grid: &CalibrationGrid,
) -> Result<SensingBudget> {
    check_positive("target time", target_seconds)?;
    let mut best: Option<(f64, SensingBudget)> = None;
    for &snr_target in &grid.snr_targets {
        for &t_read in &grid.t_reads {
            for &stretch in &grid.stretches {
                let trial = SensingBudget {
                    snr_target,
                    t_read,
                    stretch,
                    n_logic: 1,
                    ..*base
                };
                let t = integration_time(&trial)?.t_required;
                let miss = (t / target_seconds).ln().abs();
                if best.as_ref().is_none_or(|(m, _)| miss < *m) {
                    best = Some((miss, trial));
                }
            }
        }
    }
    best.map(|(_, b)| SensingBudget {
        n_logic: base.n_logic,
        ..b
    })
    .ok_or_else(|| Error::invalid("empty calibration grid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn larmor_frequency() {
        let w = proton_larmor(0.175).unwrap();
        assert!(rel(w, 2.0 * PI * 7.452e6) < 1e-3);
        assert_eq!(proton_larmor(0.0).unwrap(), 0.0);
        assert!(rel(proton_larmor(0.35).unwrap(), 2.0 * w) < 1e-15);
        assert!(proton_larmor(-1.0).is_err());
    }

    #[test]
    fn normal_axis_integral_is_pi_over_16() {
        // For an NV axis along the normal the hemisphere integral is analytic.
        let v = half_space_angular_integral(0.0).unwrap();
        assert!(rel(v, PI / 16.0) < 1e-9);
    }

    #[test]
    fn brms_constant_matches_closed_form() {
        assert!(rel(brms_constant(), brms_constant_closed_form()) < 1e-8);
        assert_eq!(brms_constant().to_bits(), brms_constant().to_bits());
    }

    #[test]
    fn depth_round_trip() {
        let rho = 6e28;
        for d in [2.3e-9, 4.8e-9, 11e-9] {
            let b2 = brms_from_depth(d, rho).unwrap();
            assert!(rel(depth_from_brms(b2, rho).unwrap(), d) < 1e-12);
        }
        let b2 = brms_from_depth(5e-9, rho).unwrap();
        assert!(rel(depth_from_brms(b2 / 8.0, rho).unwrap(), 10e-9) < 1e-12);
        assert!(depth_from_brms(0.0, rho).is_err());
        assert!(brms_from_depth(1e-9, -1.0).is_err());
    }

    #[test]
    fn coupling_scales_as_inverse_cube() {
        let a = c13_coupling(9.8e-9).unwrap();
        let b = c13_coupling(4.9e-9).unwrap();
        assert!(rel(b, 8.0 * a) < 1e-12);
        assert!(c13_coupling(0.0).is_err());
    }

    #[test]
    fn volume_mc_is_seeded() {
        let v = MolecularVolume::protein(5e-9, 4e-9);
        let a = c13_coupling_volume_mc(v, 1000, 9).unwrap();
        let b = c13_coupling_volume_mc(v, 1000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.rms_coupling > 0.0 && a.expected_spins > 0.0);
    }

    fn nominal_budget() -> SensingBudget {
        SensingBudget {
            f0: 0.063,
            f1: 0.048,
            t_read: 2e-6,
            t2: 31e-6,
            stretch: 1.4,
            coupling: 2.0 * PI * 160.0,
            snr_target: 5.0,
            n_logic: 1,
        }
    }

    #[test]
    fn time_scales_with_snr_squared() {
        let b = nominal_budget();
        let t1 = integration_time(&b).unwrap();
        let t2 = integration_time(&SensingBudget {
            snr_target: 10.0,
            ..b
        })
        .unwrap();
        assert!(rel(t2.t_required, 4.0 * t1.t_required) < 1e-12);
        assert!(rel(t2.tau_opt, t1.tau_opt) < 1e-12);
    }

    #[test]
    fn quantum_logic_divides_time() {
        let b = nominal_budget();
        let one = integration_time(&b).unwrap();
        let hundred = integration_time(&SensingBudget { n_logic: 100, ..b }).unwrap();
        assert!((one.t_required / hundred.t_required - 100.0).abs() < 1e-12);
        assert_eq!(one.t_single, hundred.t_single);
    }

    #[test]
    fn optimum_beats_grid() {
        let b = nominal_budget();
        let it = integration_time(&b).unwrap();
        for k in 0..1000 {
            let tau = b.t2 * (0.01 + 4.99 * k as f64 / 999.0);
            assert!(b.time_at(tau) >= it.t_single * (1.0 - 1e-12));
        }
    }

    #[test]
    fn zero_coupling_is_invisible() {
        let b = SensingBudget {
            coupling: 0.0,
            ..nominal_budget()
        };
        assert_eq!(integration_time(&b), Err(Error::TargetInvisible));
    }

    #[test]
    fn monotone_in_coherence_contrast_and_coupling() {
        let b = nominal_budget();
        let base = integration_time(&b).unwrap().t_required;
        let longer = integration_time(&SensingBudget { t2: 60e-6, ..b })
            .unwrap()
            .t_required;
        let brighter = integration_time(&SensingBudget { f0: 0.08, ..b })
            .unwrap()
            .t_required;
        let stronger = integration_time(&SensingBudget {
            coupling: 2.0 * PI * 300.0,
            ..b
        })
        .unwrap()
        .t_required;
        assert!(longer < base && brighter < base && stronger < base);
    }

    #[test]
    fn invalid_budget() {
        let b = nominal_budget();
        assert!(integration_time(&SensingBudget { f0: 0.01, ..b }).is_err());
        assert!(integration_time(&SensingBudget { n_logic: 0, ..b }).is_err());
        assert!(integration_time(&SensingBudget {
            snr_target: 0.0,
            ..b
        })
        .is_err());
    }
}
