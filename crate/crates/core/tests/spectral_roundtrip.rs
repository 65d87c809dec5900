//! Spectral decomposition and depth calibration, end to end.

use std::f64::consts::PI;

use nvsense_core::fieldcal::{depth_from_samples, proton_larmor};
use nvsense_core::fitcore::{spectral_decompose, ContrastReference, SpectralDecomposition};
use nvsense_core::noisebath::{coherence, proton_bath_spectrum, NoiseSpectrum, SequenceSpec};
use nvsense_core::simkit::{simulate_dd_dataset, ExperimentDataset, ReadoutModel};

fn log_times(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
        .collect()
}

fn dataset(
    model: &NoiseSpectrum,
    ns: &[usize],
    times: &[f64],
    reps: u64,
    seed: u64,
) -> ExperimentDataset {
    let seqs: Vec<_> = ns
        .iter()
        .flat_map(|&n| {
            times
                .iter()
                .map(move |&t| SequenceSpec::cpmg(n).at(t).unwrap())
        })
        .collect();
    simulate_dd_dataset(&seqs, model, &ReadoutModel::default(), reps, seed).unwrap()
}

/// Relative errors at probes whose filter peak sits in 0.05–10 MHz and whose
/// true coherence lies in [0.05, 0.95].
fn probe_errors(dec: &SpectralDecomposition, model: &NoiseSpectrum) -> Vec<f64> {
    let mut errs: Vec<f64> = dec
        .samples
        .iter()
        .filter_map(|s| {
            let c = coherence(
                &SequenceSpec::cpmg(s.n_pulses).at(s.total_time).unwrap(),
                model,
            )
            .unwrap();
            let f = s.omega / (2.0 * PI);
            ((0.05..=0.95).contains(&c) && (0.05e6..=10e6).contains(&f))
                .then(|| (s.s / model.spectral_density(s.omega).unwrap() - 1.0).abs())
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    errs
}

#[test]
fn lorentzian_baths_round_trip() {
    let s0 = 3.5e4;
    let broad = NoiseSpectrum::lorentzian(s0 / 2e-8, 1e-8).unwrap();
    let double = NoiseSpectrum::Sum(vec![
        broad.clone(),
        NoiseSpectrum::lorentzian(2.0 * s0 / 2e-6, 1e-6).unwrap(),
    ]);
    for model in [&broad, &double] {
        let ds = dataset(
            model,
            &[8, 32, 128, 512],
            &log_times(8e-6, 160e-6, 40),
            1_000_000,
            7,
        );
        let dec = spectral_decompose(&[ds], ContrastReference::FitStretched).unwrap();
        let f: Vec<f64> = dec.samples.iter().map(|s| s.omega / (2.0 * PI)).collect();
        assert!(f.iter().any(|&x| x <= 0.05e6) && f.iter().any(|&x| x >= 10e6));
        let errs = probe_errors(&dec, model);
        assert!(errs.len() >= 50);
        let median = errs[errs.len() / 2];
        assert!(median < 0.2, "median {median}");
    }
}

#[test]
fn white_noise_without_sampling_noise_is_exact() {
    let white = NoiseSpectrum::white(2.2e4).unwrap();
    let ro = ReadoutModel::default();
    // Counts large enough that Poisson noise sits far below quadrature tolerance.
    let ds = dataset(
        &white,
        &[8, 64],
        &log_times(10e-6, 80e-6, 6),
        10_000_000_000_000,
        1,
    );
    let dec = spectral_decompose(&[ds], ContrastReference::Known(ro.ideal_contrast())).unwrap();
    for s in &dec.samples {
        assert!((s.s / 2.2e4 - 1.0).abs() < 2e-3, "{}", s.s);
    }
}

#[test]
fn noise_dominated_points_are_skipped() {
    let strong = NoiseSpectrum::white(1e6).unwrap();
    let ds = dataset(&strong, &[8], &log_times(20e-6, 80e-6, 8), 1000, 4);
    let dec = spectral_decompose(
        &[ds],
        ContrastReference::Known(ReadoutModel::default().ideal_contrast()),
    )
    .unwrap();
    assert!(!dec.skipped.is_empty());
    assert_eq!(dec.samples.len() + dec.skipped.len(), 8);
}

#[test]
fn proton_depth_end_to_end() {
    let (b0, rho, depth) = (0.175, 6e28, 4.8e-9);
    let model = proton_bath_spectrum(rho, depth, b0, 1e-6).unwrap();
    let n = 512;
    let tc = PI * n as f64 / proton_larmor(b0).unwrap();
    let ds = dataset(
        &model,
        &[n],
        &log_times(0.8 * tc, 1.25 * tc, 41),
        1_000_000,
        11,
    );
    let dec = spectral_decompose(
        &[ds],
        ContrastReference::Known(ReadoutModel::default().ideal_contrast()),
    )
    .unwrap();
    let est = depth_from_samples(&dec.samples, rho, b0, 1e-6).unwrap();
    assert!((est.depth / depth - 1.0).abs() < 0.05, "{}", est.depth);
}
