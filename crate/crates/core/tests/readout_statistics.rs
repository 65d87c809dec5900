use nvsense_core::noisebath::{NoiseSpectrum, SequenceSpec};
use nvsense_core::simkit::{
    normalize_contrast, simulate_counts, simulate_dd_dataset, simulate_t1_dataset, CoherencePoint,
    ReadoutModel,
};

#[test]
fn default_readout_contrast() {
    assert!((normalize_contrast(630.0, 480.0).unwrap() - 0.2703).abs() < 5e-5);
    assert!((ReadoutModel::default().ideal_contrast() - 0.2703).abs() < 5e-5);
    assert_eq!(normalize_contrast(5.0, 5.0).unwrap(), 0.0);
    assert_eq!(
        normalize_contrast(3.0, 7.0).unwrap(),
        -normalize_contrast(7.0, 3.0).unwrap()
    );
    assert!(normalize_contrast(0.0, 0.0).is_err());
}

#[test]
fn mean_contrast_converges_with_reps() {
    let ro = ReadoutModel::default();
    let c = 0.6;
    let pts: Vec<CoherencePoint> = (0..400)
        .map(|i| CoherencePoint {
            time: 1e-6 * (i + 1) as f64,
            n_pulses: 8,
            coherence: c,
        })
        .collect();
    let mut prev_err = f64::INFINITY;
    for reps in [1_000u64, 100_000] {
        let ds = simulate_counts(&pts, &ro, reps, 17).unwrap();
        let vals: Vec<f64> = ds.points.iter().map(|p| p.contrast().unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd =
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
        let se = sd / (vals.len() as f64).sqrt();
        let err = (mean - ro.ideal_contrast() * c).abs();
        assert!(err < 4.0 * se + 1e-4, "reps {reps}: {mean} ± {se}");
        // Scatter shrinks like 1/√reps.
        assert!(sd < prev_err);
        prev_err = sd;
    }
}

#[test]
fn totals_are_poisson() {
    let ro = ReadoutModel::default();
    let pts: Vec<CoherencePoint> = (0..2000)
        .map(|i| CoherencePoint {
            time: 1e-7 * (i + 1) as f64,
            n_pulses: 0,
            coherence: 0.0,
        })
        .collect();
    let ds = simulate_counts(&pts, &ro, 2000, 5).unwrap();
    let x: Vec<f64> = ds.points.iter().map(|p| p.f0_counts as f64).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    let expected = 2000.0 * 0.5 * (ro.f0 + ro.f1);
    assert!((mean / expected - 1.0).abs() < 0.01);
    // Var/mean of a Poisson sample has sd ≈ √(2/n) ≈ 0.032.
    assert!((var / mean - 1.0).abs() < 0.1, "{}", var / mean);
}

#[test]
fn zero_noise_bath_gives_ideal_contrast() {
    let ro = ReadoutModel::default();
    let seqs: Vec<_> = (1..=20)
        .map(|k| SequenceSpec::cpmg(8).at(5e-6 * k as f64).unwrap())
        .collect();
    let ds = simulate_dd_dataset(
        &seqs,
        &NoiseSpectrum::white(0.0).unwrap(),
        &ro,
        1_000_000,
        3,
    )
    .unwrap();
    for p in &ds.points {
        let c = p.contrast().unwrap();
        assert!((c - ro.ideal_contrast()).abs() < 5.0 * p.contrast_variance().sqrt());
    }
    let again = simulate_dd_dataset(
        &seqs,
        &NoiseSpectrum::white(0.0).unwrap(),
        &ro,
        1_000_000,
        3,
    )
    .unwrap();
    assert_eq!(ds, again);
}

#[test]
fn relaxation_envelope() {
    let ro = ReadoutModel::default();
    let t1 = 3e-3;
    let ds = simulate_t1_dataset(t1, &[0.0, t1], &ro, 10_000_000, 8).unwrap();
    let c0 = ds.points[0].contrast().unwrap();
    let c1 = ds.points[1].contrast().unwrap();
    assert!((c0 - ro.ideal_contrast()).abs() < 5.0 * ds.points[0].contrast_variance().sqrt());
    let expected = ro.ideal_contrast() * (-1.0f64).exp();
    assert!((c1 - expected).abs() < 5.0 * ds.points[1].contrast_variance().sqrt());
}
