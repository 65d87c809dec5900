//! Simulate-then-fit recovery of every estimator.

use std::time::Instant;

use nvsense_core::fitcore::*;
use nvsense_core::simkit::{simulate_counts, CoherencePoint, ReadoutModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 1024 log-spaced times over [0.02, 3]·T2.
fn sweep(t2: f64) -> Vec<f64> {
    (0..1024)
        .map(|i| t2 * 0.02 * 150f64.powf(i as f64 / 1023.0))
        .collect()
}

#[test]
fn stretched_recovery_from_photon_counts() {
    let ro = ReadoutModel::default();
    for (k, &(t2, n)) in [
        (47e-6, 1.0),
        (47e-6, 1.4),
        (47e-6, 1.8),
        (31e-6, 1.0),
        (31e-6, 1.4),
        (31e-6, 1.8),
    ]
    .iter()
    .enumerate()
    {
        let mut ok = 0;
        for seed in 0..50u64 {
            let pts: Vec<CoherencePoint> = sweep(t2)
                .into_iter()
                .map(|t| CoherencePoint {
                    time: t,
                    n_pulses: 64,
                    coherence: stretched_exp(t, 1.0, t2, n),
                })
                .collect();
            let ds = simulate_counts(&pts, &ro, 100_000, 1000 * k as u64 + seed).unwrap();
            let t: Vec<f64> = ds.points.iter().map(|p| p.time()).collect();
            let c: Vec<f64> = ds.points.iter().map(|p| p.contrast().unwrap()).collect();
            let w: Vec<f64> = ds
                .points
                .iter()
                .map(|p| 1.0 / p.contrast_variance())
                .collect();
            let f = fit_stretched_exp(&t, &c, Some(&w)).unwrap();
            if (f.param("T2").unwrap() / t2 - 1.0).abs() < 0.05
                && (f.param("n").unwrap() - n).abs() < 0.15
            {
                ok += 1;
            }
        }
        assert!(ok >= 48, "T2={t2} n={n}: {ok}/50");
    }
}

#[test]
fn stretched_fit_plateau_and_speed() {
    let t: Vec<f64> = (1..=40).map(|i| i as f64 * 2e-6).collect();
    let c: Vec<f64> = t
        .iter()
        .map(|&x| stretched_exp(x, 0.27, 31e-6, 1.4))
        .collect();
    let start = Instant::now();
    let reps = 50;
    for _ in 0..reps {
        fit_stretched_exp(&t, &c, None).unwrap();
    }
    let per_fit = start.elapsed().as_secs_f64() / reps as f64;
    assert!(per_fit < 0.01, "{per_fit} s per fit");
    let f = fit_stretched_exp(&t, &c, None).unwrap();
    assert!((f.param("A").unwrap() - 0.27).abs() < 1e-7);
    assert!(f.converged);
}

const NS: [u64; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

fn scaling_trials(saturating: bool) -> (usize, Vec<usize>) {
    let noise = Normal::new(0.0, 0.03).unwrap();
    let truth: &[(&str, f64)] = if saturating {
        &[("T2_1", 10e-6), ("s", 0.7), ("N_sat", 30.0)]
    } else {
        &[("T2_1", 10e-6), ("s", 0.6)]
    };
    let mut selected = 0;
    let mut within = vec![0; truth.len()];
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + if saturating { 0 } else { 500 });
        let y: Vec<f64> = NS
            .iter()
            .map(|&n| {
                let m = if saturating {
                    saturation_model(n as f64, 10e-6, 0.7, 30.0)
                } else {
                    power_model(n as f64, 10e-6, 0.6)
                };
                m * (1.0 + noise.sample(&mut rng))
            })
            .collect();
        let want = if saturating {
            ModelId::T2Saturation
        } else {
            ModelId::T2PowerLaw
        };
        if fit_t2_vs_n(&NS, &y, ScalingMode::Auto).unwrap().fit.model == want {
            selected += 1;
        }
        let mode = if saturating {
            ScalingMode::Saturation
        } else {
            ScalingMode::Power
        };
        let f = fit_t2_vs_n(&NS, &y, mode).unwrap().fit;
        for (i, (name, v)) in truth.iter().enumerate() {
            if (f.param(name).unwrap() - v).abs() <= 2.0 * f.stderr(name).unwrap() {
                within[i] += 1;
            }
        }
    }
    (selected, within)
}

#[test]
fn t2_scaling_recovery_and_selection() {
    for saturating in [true, false] {
        let (selected, within) = scaling_trials(saturating);
        assert!(
            selected >= 90,
            "saturating={saturating}: selected {selected}"
        );
        // Nominal 2σ coverage with 5–6 residual degrees of freedom is ≈ 0.90.
        for w in within {
            assert!(w >= 84, "saturating={saturating}: {w}/100 within 2σ");
        }
    }
}

#[test]
fn stability_series() {
    // Counts over 7 days, four per day, Poisson-level noise.
    let days: Vec<f64> = (0..29).map(|i| i as f64 * 0.25).collect();
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = days
            .iter()
            .map(|&d| {
                let m = 400.0 * 2f64.powf(-d / 5.7);
                m + Normal::new(0.0, m.sqrt()).unwrap().sample(&mut rng)
            })
            .collect();
        let f = fit_exp_decay(&days, &y).unwrap();
        if (f.param("half_life").unwrap() / 5.7 - 1.0).abs() < 0.1 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}");
}

#[test]
fn change_statistics_fixture() {
    // Reductions of 27, 49 and 71 percent: mean 49, sample sd 22.
    let before = [40.0, 50.0, 60.0];
    let after = [40.0 * 0.73, 50.0 * 0.51, 60.0 * 0.29];
    let s = t2_change_stats(&before, &after).unwrap();
    assert!((s.mean_pct - 49.0).abs() < 1e-9);
    assert!((s.std_pct - 22.0).abs() < 1e-9);
}
