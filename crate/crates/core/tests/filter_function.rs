use std::f64::consts::PI;

use num_complex::Complex64;
use nvsense_core::pulses::{build_sequence, Family, PulseSequence};
use proptest::prelude::*;

const US: f64 = 1e-6;

/// Composite Simpson integration of y(t′)e^(−iωt′) over each constant-sign
/// segment of the toggling function.
fn quadrature_transform(seq: &PulseSequence, omega: f64, panels_per_segment: usize) -> Complex64 {
    let mut edges = vec![0.0];
    edges.extend_from_slice(seq.pulse_times());
    edges.push(seq.total_time());
    let mut total = Complex64::new(0.0, 0.0);
    for (k, w) in edges.windows(2).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let (a, b) = (w[0], w[1]);
        let m = 2 * panels_per_segment;
        let h = (b - a) / m as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..=m {
            let x = a + h * i as f64;
            let c = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += Complex64::from_polar(c, -omega * x);
        }
        total += acc * (sign * h / 3.0);
    }
    total
}

#[test]
fn closed_form_matches_quadrature() {
    let t = 37.0 * US;
    for (family, n) in [
        (Family::FreeEvolution, 0),
        (Family::SpinEcho, 1),
        (Family::Cpmg, 8),
        (Family::Cpmg, 64),
    ] {
        let seq = build_sequence(family, n, t).unwrap();
        for k in 0..50 {
            // Log-spaced from 0.013/t to ~20·max(N,1)·π/t, avoiding exact nulls.
            let lo = 0.013 / t;
            let hi = 20.0 * PI * (n.max(1) as f64) / t;
            let w = lo * (hi / lo).powf(k as f64 / 49.0) * (1.0 + 1e-3 * (k as f64).sqrt());
            let exact = seq.filter_weight(w);
            let oracle = quadrature_transform(&seq, w, 2000).norm_sqr();
            let rel = (exact - oracle).abs() / oracle;
            assert!(
                rel < 1e-6,
                "{family:?}({n}) ω={w:e}: {exact:e} vs {oracle:e} rel {rel:e}"
            );
        }
    }
}

#[test]
fn cpmg64_at_passband_centre_matches_quadrature() {
    let t = 100.0 * US;
    let seq = build_sequence(Family::Cpmg, 64, t).unwrap();
    let w = PI * 64.0 / t;
    let exact = seq.filter_weight(w);
    let oracle = quadrature_transform(&seq, w, 4000).norm_sqr();
    assert!((exact - oracle).abs() / oracle < 1e-6);
}

#[test]
fn parseval_identity() {
    // (1/2π)∫_{−∞}^{∞} |ỹ|² dω = t, using |ỹ(−ω)| = |ỹ(ω)|.
    for n in [0, 1, 8] {
        let t = 10.0 * US;
        let seq = build_sequence(Family::Cpmg, n, t).unwrap();
        let w_max = 4000.0 / t;
        let steps = 400_000;
        let h = w_max / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let c = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += c * seq.filter_weight(h * i as f64);
        }
        let integral = 2.0 * acc * h / (2.0 * PI);
        assert!(
            (integral - t).abs() / t < 0.01,
            "N={n}: {integral:e} vs {t:e}"
        );
    }
}

#[test]
fn even_cpmg_vanishes_at_even_harmonics() {
    let t = 50.0 * US;
    let n = 64;
    let seq = build_sequence(Family::Cpmg, n, t).unwrap();
    for k in 1..=4 {
        let w = 2.0 * PI * (k * n) as f64 / t;
        assert!(seq.filter_weight(w) < 1e-6 * t * t, "k={k}");
    }
}

#[test]
fn grid_argmax_near_passband_centre() {
    let t = 32.0 * US;
    let seq = build_sequence(Family::Cpmg, 32, t).unwrap();
    let centre = seq.filter_peak_frequency().unwrap();
    let (mut best_w, mut best) = (0.0, 0.0);
    for i in 1..20_000 {
        let w = 2.0 * centre * i as f64 / 20_000.0;
        let v = seq.filter_weight(w);
        if v > best {
            best = v;
            best_w = w;
        }
    }
    assert!(
        (best_w - centre).abs() / centre < 0.02,
        "{best_w:e} vs {centre:e}"
    );
}

proptest! {
    #[test]
    fn time_scaling(n in 0i64..40, t_us in 0.5f64..200.0, alpha in 0.1f64..10.0, x in 0.0f64..60.0) {
        let t = t_us * US;
        let seq = build_sequence(Family::Cpmg, n, t).unwrap();
        let scaled = seq.scaled(alpha).unwrap();
        let w = x / t;
        let lhs = scaled.filter_weight(w / alpha);
        let rhs = alpha * alpha * seq.filter_weight(w);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (alpha * t).powi(2));
    }

    #[test]
    fn weights_are_nonnegative_and_bounded(n in 0i64..100, x in 0.0f64..500.0) {
        let t = 10.0 * US;
        let seq = build_sequence(Family::Cpmg, n, t).unwrap();
        let v = seq.filter_weight(x / t);
        // |ỹ| ≤ ∫|y| = t.
        prop_assert!(v >= 0.0 && v <= t * t * (1.0 + 1e-9));
    }
}
