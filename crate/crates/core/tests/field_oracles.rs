//! Field calculators against Monte Carlo and closed-form oracles.

use std::f64::consts::PI;

use nvsense_core::consts::{GAMMA_C13, GAMMA_E, GAMMA_H, HBAR, MU0_OVER_4PI};
use nvsense_core::fieldcal::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// `∫ b²(r) dV / ρ` over z ≥ d by importance sampling proton positions:
/// depth with density ∝ z⁻⁴, lateral offset with density ∝ (ρ² + z²)⁻².
fn brms_mc(depth: f64, samples: usize, seed: u64) -> (f64, f64) {
    let tilt = (1.0f64 / 3.0).sqrt().acos();
    let axis = [tilt.sin(), 0.0, tilt.cos()];
    let pref = (MU0_OVER_4PI * HBAR * GAMMA_H).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let z = depth * (1.0 - rng.random::<f64>()).powf(-1.0 / 3.0);
        let u: f64 = 1.0 - rng.random::<f64>();
        let lat = z * (1.0 / u - 1.0).sqrt();
        let phi = 2.0 * PI * rng.random::<f64>();
        let r = [lat * phi.cos(), lat * phi.sin(), z];
        let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        let rn = r2.sqrt();
        let unit = [r[0] / rn, r[1] / rn, r[2] / rn];
        let c = unit[0] * axis[0] + unit[1] * axis[1] + unit[2] * axis[2];
        // Field along the axis from the precessing transverse moment:
        // 3(m·r̂)(r̂·a) with ⟨(m·r̂)²⟩ = |r̂ − c·a|²/4 per unit moment.
        let perp2: f64 = (0..3)
            .map(|i| (unit[i] - c * axis[i]) * (unit[i] - c * axis[i]))
            .sum();
        let b2 = pref * 9.0 * c * c * perp2 / 4.0 / (r2 * r2 * r2);
        let pdf = 3.0 * depth.powi(3) / z.powi(4) * z * z / (PI * (lat * lat + z * z).powi(2));
        let w = b2 / pdf;
        s += w;
        s2 += w * w;
    }
    let n = samples as f64;
    let mean = s / n;
    (mean, ((s2 / n - mean * mean) / n).sqrt())
}

#[test]
fn brms_constant_matches_position_monte_carlo() {
    let d = 4.8e-9;
    let (mc, se) = brms_mc(d, 10_000_000, 99);
    let k = brms_constant();
    let numeric = k / d.powi(3);
    assert!(rel(numeric, mc) < 0.01, "{numeric} vs {mc} ± {se}");
    assert!(se / mc < 0.003);
}

#[test]
fn brms_constant_near_closed_form() {
    let r = brms_constant() / brms_constant_closed_form();
    println!("numerical/closed-form brms constant ratio = {r:.4}");
    assert!((r - 1.0).abs() < 0.10);
    // Cached value is bit-identical.
    assert_eq!(brms_constant().to_bits(), brms_constant().to_bits());
}

#[test]
fn depth_round_trip_and_scaling() {
    for d in [2.3e-9, 4.8e-9, 11e-9] {
        let b2 = brms_from_depth(d, 6e28).unwrap();
        assert!(rel(depth_from_brms(b2, 6e28).unwrap(), d) < 1e-12);
        assert!(rel(brms_from_depth(d, 1.2e29).unwrap(), 2.0 * b2) < 1e-14);
        assert!(rel(depth_from_brms(b2 / 8.0, 6e28).unwrap(), 2.0 * d) < 1e-12);
    }
    assert!(depth_from_brms(0.0, 6e28).is_err());
    assert!(brms_from_depth(-1.0, 6e28).is_err());
}

#[test]
fn larmor_at_1750_gauss() {
    let w = proton_larmor(0.175).unwrap();
    assert!((w / (2.0 * PI) / 1e6 - 7.4507).abs() < 1e-3);
    assert_eq!(proton_larmor(0.0).unwrap(), 0.0);
}

#[test]
fn c13_closed_form_matches_orientation_monte_carlo() {
    let r: f64 = 9.8e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = MU0_OVER_4PI * GAMMA_E * GAMMA_C13 * HBAR / r.powi(3);
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let c: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let a = base * (1.0 - 3.0 * c * c);
        acc += a * a;
    }
    let mc = (acc / n as f64).sqrt();
    let closed = c13_coupling(r).unwrap();
    assert!(rel(closed, mc) < 0.01, "{closed} vs {mc}");
    let ratio = 2.0 * PI * 160.0 / closed;
    println!(
        "c13 coupling at 9.8 nm = 2π·{:.2} Hz; (2π·160 Hz)/closed-form ratio = {ratio:.2}",
        closed / (2.0 * PI)
    );
    assert!(ratio < 10.0 && ratio > 0.1);
    assert!(rel(c13_coupling(r / 2.0).unwrap(), 8.0 * closed) < 1e-12);
    assert!(c13_coupling(0.0).is_err());
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
fn integration_time_monotonicity() {
    let b = nominal_budget();
    let base = integration_time(&b).unwrap().t_required;
    let longer_t2 = integration_time(&SensingBudget { t2: 47e-6, ..b })
        .unwrap()
        .t_required;
    assert!(longer_t2 <= base);
    let more_contrast = integration_time(&SensingBudget { f0: 0.07, ..b })
        .unwrap()
        .t_required;
    assert!(more_contrast <= base);
    let stronger = integration_time(&SensingBudget {
        coupling: 2.0 * PI * 320.0,
        ..b
    })
    .unwrap();
    assert!(stronger.t_required <= base);
    assert!(matches!(
        integration_time(&SensingBudget { coupling: 0.0, ..b }),
        Err(nvsense_core::Error::TargetInvisible)
    ));
}

#[test]
fn sensitivity_improves_with_t2() {
    // Weak coupling: achieved SNR per √T rises with T2.
    let mut prev = 0.0;
    for t2 in [10e-6, 20e-6, 40e-6, 80e-6, 160e-6] {
        let b = SensingBudget {
            t2,
            coupling: 2.0 * PI * 5.0,
            ..nominal_budget()
        };
        let it = integration_time(&b).unwrap();
        let per_root_t = b.snr_target / it.t_required.sqrt();
        assert!(per_root_t > prev);
        prev = per_root_t;
    }
}

#[test]
fn calibration_hits_target_time() {
    let b = calibrate_budget(&nominal_budget(), 10080.0, &CalibrationGrid::default()).unwrap();
    let t = integration_time(&b).unwrap().t_required;
    assert!((t / 10080.0 - 1.0).abs() < 0.5);
    assert!((1.0..=10.0).contains(&b.snr_target));
    assert!((1e-6..=5e-6).contains(&b.t_read));
    assert!((1.0..=1.8).contains(&b.stretch));
    let fast = integration_time(&SensingBudget { n_logic: 100, ..b })
        .unwrap()
        .t_required;
    assert!((t / fast - 100.0).abs() < 1e-9);
}
