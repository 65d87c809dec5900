use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nvsense_core::fieldcal::{
    calibrate_budget, depth_from_brms, fit_proton_peak, integration_time, proton_larmor,
    CalibrationGrid,
};
use nvsense_core::fitcore::{
    fit_stretched_exp, fit_t2_vs_n, spectral_decompose, ContrastReference, FitNote, FitResult,
    ScalingMode,
};
use nvsense_core::noisebath::SequenceSpec;
use nvsense_core::pulses::Family;
use nvsense_core::simkit::{simulate_dd_dataset, simulate_t1_dataset};
use nvsense_core::smassay::{
    classify_steps, detect_spots, estimate_density, fit_titration, roughness_ra,
    stability_pipeline, synth_bleach_trace, synth_image, BleachSpec, DetectParams, StabilityInput,
    StepParams, SynthParams,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::formats::{
    fmt_f64, read_frame, read_heightmap, read_pairs, read_spectrum, read_traces, spectrum_to_csv,
    traces_to_csv, write_frame, write_text, CsvOut, DatasetFile, SpectrumRow, Table,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "nvsense",
    version,
    about = "Near-surface NV noise spectroscopy and single-molecule assay toolkit"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the default configuration.
    Config {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate photon counts for a sweep of evolution times.
    Simulate(SimulateArgs),
    /// Fit a stretched exponential to one pulse family of a dataset.
    FitCoherence(FitCoherenceArgs),
    /// Fit T2 against pulse count.
    FitT2n(FitT2nArgs),
    /// Decompose every CPMG family in a directory of datasets.
    Spectrum(SpectrumArgs),
    /// NV depth from the proton line in a decomposed spectrum.
    Depth(DepthArgs),
    /// Integration time for single-spin detection.
    Sense(SenseArgs),
    /// Single-molecule surface assay.
    #[command(subcommand)]
    Smassay(SmassayCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Free,
    Echo,
    Cpmg,
    /// Relaxation envelope exp(-t/T1), no pulses.
    T1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "cpmg")]
    pub family: FamilyArg,
    /// Pulse counts for CPMG, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub n_pulses: Vec<usize>,
    #[arg(long)]
    pub t_min_us: f64,
    #[arg(long)]
    pub t_max_us: f64,
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    #[arg(long, value_enum, default_value = "log")]
    pub spacing: Spacing,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// T1 for `--family t1`, µs.
    #[arg(long)]
    pub t1_us: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCoherenceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Pulse family to fit; required when the dataset holds several.
    #[arg(long)]
    pub n_pulses: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Auto,
    Sat,
    Power,
}

#[derive(Debug, Args)]
pub struct FitT2nArgs {
    /// CSV with columns `n_pulses,T2_us`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReferenceArg {
    /// Amplitude of a stretched-exponential fit per family.
    Fit,
    /// Ideal contrast of the configured readout.
    Ideal,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Directory of dataset CSVs, read in file-name order.
    #[arg(long = "in-dir")]
    pub in_dir: PathBuf,
    #[arg(long, value_enum, default_value = "fit")]
    pub reference: ReferenceArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DepthArgs {
    /// Spectrum CSV from `spectrum`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Proton density, m⁻³.
    #[arg(long, default_value_t = 6e28)]
    pub rho_h: f64,
    /// Proton linewidth time, µs; the bath's value or 1 µs when omitted.
    #[arg(long)]
    pub tau_h_us: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SenseArgs {
    /// Overrides `[sense] n_logic`.
    #[arg(long)]
    pub n_logic: Option<u32>,
    /// Re-calibrate (snr_target, t_read, n) on the default grid to hit this
    /// single-shot time, s.
    #[arg(long)]
    pub calibrate_s: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SmassayCommand {
    /// Synthetic fluorescence frame.
    Synth(SynthArgs),
    /// Count spots in a frame (PNG or CSV grid).
    Detect(DetectArgs),
    /// Density against functional fraction.
    Titrate(TitrateArgs),
    /// Count photobleaching steps per spot.
    Trace(TraceArgs),
    /// Synthetic photobleaching traces.
    SynthTrace(SynthTraceArgs),
    /// Exponential half-life of counts or linear drift of thickness.
    Stability(StabilityArgs),
    /// Arithmetic mean roughness of a height map.
    Roughness(RoughnessArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Emitters per µm².
    #[arg(long)]
    pub density: f64,
    /// Field of view, µm².
    #[arg(long, default_value_t = 2800.0)]
    pub fov_area: f64,
    /// Peak-pixel SNR; sets photons per spot unless `--photons` is given.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    #[arg(long)]
    pub photons: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    pub bg: f64,
    #[arg(long, default_value_t = 0.1)]
    pub exposure_s: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `.png` for 16-bit grayscale, anything else for a CSV grid.
    #[arg(long)]
    pub out: PathBuf,
    /// Emitter positions, `x_um,y_um`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    /// Summary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-spot CSV.
    #[arg(long)]
    pub spots: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TitrateArgs {
    /// CSV with columns `biotin_fraction,n_spots,area_um2`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// CSV with columns `spot_id,t_s,intensity`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub min_segment: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthTraceArgs {
    /// Sample index of each bleach event, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub bleach_samples: Vec<usize>,
    #[arg(long, default_value_t = 5.0)]
    pub step_height: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 3.0)]
    pub background: f64,
    #[arg(long, default_value_t = 120)]
    pub length: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dt_s: f64,
    /// Number of spots, each with its own noise stream.
    #[arg(long, default_value_t = 1)]
    pub n_spots: u32,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StabilityKind {
    /// Spot counts; reports the half-life in days.
    Counts,
    /// Layer thickness in nm; reports the drift in nm/day.
    Thickness,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// CSV with columns `day,value`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: StabilityKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RoughnessArgs {
    /// Headerless CSV grid of heights in pm.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Grid pitch, nm; the file's `pitch_nm` metadata otherwise.
    #[arg(long)]
    pub pitch_nm: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// 2 for bad input, 3 for numerical failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nvsense_core::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
    }
    2
}

fn write_json(path: &Path, mut value: Value) -> anyhow::Result<()> {
    if let Value::Object(m) = &mut value {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    write_text(path, &text)
}

fn notes(fit: &FitResult) -> Vec<String> {
    fit.notes
        .iter()
        .map(|n| match n {
            FitNote::AtBound(p) => format!("at_bound:{p}"),
            FitNote::StdErrUndefined => "stderr_undefined".to_string(),
        })
        .collect()
}

/// Parameter values and standard errors under `key` and `stderr_key`,
/// multiplied by `scale`.
fn put_param(
    obj: &mut serde_json::Map<String, Value>,
    fit: &FitResult,
    name: &str,
    key: &str,
    scale: f64,
) {
    let v = fit.param(name).map(|v| v * scale);
    let s = fit.stderr(name).map(|s| s * scale);
    obj.insert(key.to_string(), json!(v));
    obj.insert(format!("stderr_{key}"), json!(s));
}

fn fit_common(fit: &FitResult) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("model".into(), json!(fit.model.as_str()));
    m.insert("converged".into(), json!(fit.converged));
    m.insert("notes".into(), json!(notes(fit)));
    m.insert("residual_norm".into(), json!(fit.residual_norm));
    m.insert("n_points".into(), json!(fit.n_points));
    m
}

fn sweep_times(
    t_min_us: f64,
    t_max_us: f64,
    points: usize,
    spacing: Spacing,
) -> anyhow::Result<Vec<f64>> {
    if !(t_min_us > 0.0) || !(t_max_us > t_min_us) || !t_max_us.is_finite() {
        bail!(nvsense_core::Error::InvalidInput(
            "need 0 < t_min_us < t_max_us".into()
        ));
    }
    if points < 2 {
        bail!(nvsense_core::Error::InvalidInput(
            "need at least two points".into()
        ));
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let f = i as f64 / last;
            let us = match spacing {
                Spacing::Linear => t_min_us + f * (t_max_us - t_min_us),
                Spacing::Log => t_min_us * (t_max_us / t_min_us).powf(f),
            };
            us * 1e-6
        })
        .collect())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Config { out } => {
            let text = RunConfig::default().to_toml();
            match out {
                Some(p) => write_text(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Simulate(a) => simulate(&cfg, a),
        Command::FitCoherence(a) => fit_coherence(a),
        Command::FitT2n(a) => fit_t2n(a),
        Command::Spectrum(a) => spectrum(&cfg, a),
        Command::Depth(a) => depth(&cfg, a),
        Command::Sense(a) => sense(&cfg, a),
        Command::Smassay(c) => smassay(&cfg, c),
    }
}

fn simulate(cfg: &RunConfig, a: SimulateArgs) -> anyhow::Result<()> {
    let readout = cfg.readout_model()?;
    let seed = a.seed.unwrap_or(cfg.master_seed);
    let times = sweep_times(a.t_min_us, a.t_max_us, a.points, a.spacing)?;
    let mut ds = match a.family {
        FamilyArg::T1 => {
            let t1 = a.t1_us.ok_or_else(|| {
                nvsense_core::Error::InvalidInput("--family t1 needs --t1-us".into())
            })?;
            simulate_t1_dataset(t1 * 1e-6, &times, &readout, a.reps, seed)?
        }
        family => {
            let specs: Vec<SequenceSpec> = match family {
                FamilyArg::Free => vec![SequenceSpec::free()],
                FamilyArg::Echo => vec![SequenceSpec::echo()],
                _ => a
                    .n_pulses
                    .iter()
                    .map(|&n| SequenceSpec {
                        family: Family::Cpmg,
                        n_pulses: n,
                    })
                    .collect(),
            };
            let mut seqs = Vec::with_capacity(specs.len() * times.len());
            for spec in &specs {
                for &t in &times {
                    seqs.push(spec.at(t)?);
                }
            }
            simulate_dd_dataset(&seqs, &cfg.noise()?, &readout, a.reps, seed)?
        }
    };
    ds.field_gauss = cfg.field.b0_gauss;
    write_text(&a.out, &DatasetFile::from_dataset(&ds).to_csv())
}

fn fit_coherence(a: FitCoherenceArgs) -> anyhow::Result<()> {
    let ds = DatasetFile::read(&a.input)?.to_dataset()?;
    let families = ds.pulse_counts();
    let n = match (a.n_pulses, families.as_slice()) {
        (Some(n), _) if families.contains(&n) => n,
        (Some(n), _) => bail!(nvsense_core::Error::InvalidInput(format!(
            "no points with {n} pulses; dataset has {families:?}"
        ))),
        (None, [only]) => *only,
        (None, _) => bail!(nvsense_core::Error::InvalidInput(format!(
            "dataset holds pulse counts {families:?}; choose one with --n-pulses"
        ))),
    };
    let pts = ds.family(n);
    let mut times = Vec::with_capacity(pts.len());
    let mut contrast = Vec::with_capacity(pts.len());
    let mut weights = Vec::with_capacity(pts.len());
    for p in &pts {
        times.push(p.time());
        contrast.push(p.contrast()?);
        weights.push(1.0 / p.contrast_variance());
    }
    let fit = fit_stretched_exp(&times, &contrast, Some(&weights))?;
    let mut m = fit_common(&fit);
    m.insert("n_pulses".into(), json!(n));
    put_param(&mut m, &fit, "T2", "T2_us", 1e6);
    put_param(&mut m, &fit, "n", "n", 1.0);
    put_param(&mut m, &fit, "A", "A", 1.0);
    write_json(&a.out, Value::Object(m))
}

fn fit_t2n(a: FitT2nArgs) -> anyhow::Result<()> {
    let (ns, t2_us): (Vec<u64>, Vec<f64>) = read_pairs(&a.input, ["n_pulses", "T2_us"])?;
    let mode = match a.mode {
        ModeArg::Auto => ScalingMode::Auto,
        ModeArg::Sat => ScalingMode::Saturation,
        ModeArg::Power => ScalingMode::Power,
    };
    let t2s: Vec<f64> = t2_us.iter().map(|t| t * 1e-6).collect();
    let r = fit_t2_vs_n(&ns, &t2s, mode)?;
    let mut m = fit_common(&r.fit);
    put_param(&mut m, &r.fit, "T2_1", "T2_1_us", 1e6);
    put_param(&mut m, &r.fit, "s", "s", 1.0);
    put_param(&mut m, &r.fit, "N_sat", "N_sat", 1.0);
    m.insert("aicc_power".into(), json!(r.aicc_power));
    m.insert("aicc_saturation".into(), json!(r.aicc_saturation));
    write_json(&a.out, Value::Object(m))
}

fn spectrum(cfg: &RunConfig, a: SpectrumArgs) -> anyhow::Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.in_dir)
        .with_context(|| format!("reading directory {}", a.in_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(nvsense_core::Error::InvalidInput(format!(
            "no .csv datasets in {}",
            a.in_dir.display()
        )));
    }
    let datasets = files
        .iter()
        .map(|p| DatasetFile::read(p)?.to_dataset())
        .collect::<anyhow::Result<Vec<_>>>()?;
    let reference = match a.reference {
        ReferenceArg::Fit => ContrastReference::FitStretched,
        ReferenceArg::Ideal => ContrastReference::Known(cfg.readout_model()?.ideal_contrast()),
    };
    let dec = spectral_decompose(&datasets, reference)?;
    let mut rows: Vec<SpectrumRow> = dec.samples.iter().map(SpectrumRow::from_sample).collect();
    rows.sort_by(|x, y| {
        x.omega_rad_s
            .total_cmp(&y.omega_rad_s)
            .then(x.n_pulses.cmp(&y.n_pulses))
            .then(x.total_time_us.total_cmp(&y.total_time_us))
    });
    eprintln!(
        "{} samples from {} datasets, {} probes skipped",
        rows.len(),
        datasets.len(),
        dec.skipped.len()
    );
    write_text(&a.out, &spectrum_to_csv(&rows))
}

fn depth(cfg: &RunConfig, a: DepthArgs) -> anyhow::Result<()> {
    let samples: Vec<_> = read_spectrum(&a.input)?
        .iter()
        .map(SpectrumRow::to_sample)
        .collect();
    let tau_h = a.tau_h_us.map_or(cfg.tau_h(), |t| t * 1e-6);
    let center = proton_larmor(cfg.b0_tesla())?;
    let peak = fit_proton_peak(&samples, center, tau_h)?;
    let d = depth_from_brms(peak.b_rms_sq, a.rho_h)?;
    write_json(
        &a.out,
        json!({
            "depth_nm": d * 1e9,
            "B_rms_sq_T2": peak.b_rms_sq,
            "B_rms_nT": peak.b_rms_sq.sqrt() * 1e9,
            "background_rad2_s": peak.background,
            "n_probes": peak.n_probes,
            "rho_h_m3": a.rho_h,
            "B0_gauss": cfg.field.b0_gauss,
            "tau_h_us": tau_h * 1e6,
        }),
    )
}

fn sense(cfg: &RunConfig, a: SenseArgs) -> anyhow::Result<()> {
    let mut budget = cfg.budget()?;
    if let Some(n) = a.n_logic {
        budget.n_logic = n;
    }
    if let Some(target) = a.calibrate_s {
        budget = calibrate_budget(&budget, target, &CalibrationGrid::default())?;
    }
    let it = integration_time(&budget)?;
    write_json(
        &a.out,
        json!({
            "tau_opt_us": it.tau_opt * 1e6,
            "T_required_s": it.t_required,
            "T_required_h": it.t_required / 3600.0,
            "T_single_s": it.t_single,
            "snr_target": budget.snr_target,
            "t_read_us": budget.t_read * 1e6,
            "n": budget.stretch,
            "n_logic": budget.n_logic,
            "T2_us": budget.t2 * 1e6,
            "coupling_hz": budget.coupling / (2.0 * std::f64::consts::PI),
        }),
    )
}

fn smassay(cfg: &RunConfig, c: SmassayCommand) -> anyhow::Result<()> {
    let pitch = cfg.smassay.pixel_pitch_um;
    match c {
        SmassayCommand::Synth(a) => {
            let mut p = SynthParams {
                density: a.density,
                fov_area: a.fov_area,
                pixel_pitch: pitch,
                psf_sigma_px: cfg.smassay.psf_sigma_px,
                photons_per_spot: 1.0,
                bg_per_px: a.bg,
                exposure: a.exposure_s,
            };
            p.photons_per_spot = match a.photons {
                Some(ph) => ph,
                None if a.bg > 0.0 => a.snr / p.spot_snr(),
                None => bail!(nvsense_core::Error::InvalidInput(
                    "--snr needs a positive background; give --photons instead".into()
                )),
            };
            let img = synth_image(&p, a.seed.unwrap_or(cfg.master_seed))?;
            write_frame(&a.out, &img.frame)?;
            if let Some(t) = a.truth {
                let mut out = CsvOut::new(&[], &["x_um", "y_um"]);
                for e in &img.emitters {
                    out.row(&[fmt_f64(e[0]), fmt_f64(e[1])]);
                }
                write_text(&t, &out.finish())?;
            }
            Ok(())
        }
        SmassayCommand::Detect(a) => {
            let frame = read_frame(&a.input, pitch, 0.1)?;
            let params = DetectParams {
                threshold: a.threshold,
                psf_sigma: cfg.smassay.psf_sigma_px,
                ..DetectParams::default()
            };
            let det = detect_spots(&frame, &params)?;
            let area = frame.area();
            let pt = estimate_density(det.count() as u64, area)?;
            if let Some(sp) = a.spots {
                let mut out = CsvOut::new(&[], &["x_um", "y_um", "peak", "area_px", "aggregate"]);
                for s in &det.spots {
                    out.row(&[
                        fmt_f64(s.x),
                        fmt_f64(s.y),
                        fmt_f64(s.peak),
                        s.area_px.to_string(),
                        s.aggregate.to_string(),
                    ]);
                }
                write_text(&sp, &out.finish())?;
            }
            write_json(
                &a.out,
                json!({
                    "count": det.count(),
                    "aggregates": det.n_aggregates(),
                    "area_um2": area,
                    "density_um2": pt.density,
                    "ci_low_um2": pt.ci_low,
                    "ci_high_um2": pt.ci_high,
                    "background_sigma": det.background_sigma,
                }),
            )
        }
        SmassayCommand::Titrate(a) => {
            let t = Table::read(&a.input, &["biotin_fraction", "n_spots", "area_um2"])?;
            let mut points = Vec::with_capacity(t.len());
            for i in 0..t.len() {
                let frac: f64 = t.get(i, 0)?;
                let n: u64 = t.get(i, 1)?;
                let area: f64 = t.get(i, 2)?;
                points.push(estimate_density(n, area)?.with_fraction(frac)?);
            }
            let fit = fit_titration(&points)?;
            let pts: Vec<Value> = points
                .iter()
                .map(|p| {
                    json!({
                        "biotin_fraction": p.biotin_fraction,
                        "density_um2": p.density,
                        "ci_low_um2": p.ci_low,
                        "ci_high_um2": p.ci_high,
                    })
                })
                .collect();
            write_json(
                &a.out,
                json!({
                    "points": pts,
                    "rho_ns_um2": fit.rho_ns,
                    "slope_um2": fit.slope,
                    "dynamic_range": fit.dynamic_range,
                    "clamped": fit.clamped,
                }),
            )
        }
        SmassayCommand::Trace(a) => {
            let traces = read_traces(&a.input)?;
            let params = StepParams {
                threshold: a.threshold,
                min_segment: a.min_segment,
            };
            let mut out = CsvOut::new(&[], &["spot_id", "n_steps", "step_times_s"]);
            for tr in &traces {
                let c = classify_steps(tr, &params)?;
                let times: Vec<String> = c.step_times.iter().map(|t| fmt_f64(*t)).collect();
                out.row(&[
                    tr.spot_id.to_string(),
                    c.n_steps.to_string(),
                    times.join(";"),
                ]);
            }
            write_text(&a.out, &out.finish())
        }
        SmassayCommand::SynthTrace(a) => {
            let seed = a.seed.unwrap_or(cfg.master_seed);
            let spec = BleachSpec {
                step_height: a.step_height,
                noise_sigma: a.noise,
                background: a.background,
                bleach_times: a.bleach_samples.clone(),
                length: a.length,
                dt: a.dt_s,
            };
            let traces = (0..a.n_spots)
                .map(|k| {
                    let mut tr = synth_bleach_trace(&spec, seed.wrapping_add(k as u64))?;
                    tr.spot_id = k;
                    Ok(tr)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            write_text(&a.out, &traces_to_csv(&traces))
        }
        SmassayCommand::Stability(a) => {
            let (days, values): (Vec<f64>, Vec<f64>) = read_pairs(&a.input, ["day", "value"])?;
            let input = match a.kind {
                StabilityKind::Counts => StabilityInput::Counts {
                    days: &days,
                    counts: &values,
                },
                StabilityKind::Thickness => StabilityInput::Thickness {
                    days: &days,
                    nm: &values,
                },
            };
            let r = stability_pipeline(input)?;
            let mut m = fit_common(&r.fit);
            let key = match a.kind {
                StabilityKind::Counts => "half_life_days",
                StabilityKind::Thickness => "slope_nm_per_day",
            };
            m.insert(key.into(), json!(r.value));
            m.insert(format!("stderr_{key}"), json!(r.stderr));
            m.insert("rate_per_day".into(), json!(r.rate));
            write_json(&a.out, Value::Object(m))
        }
        SmassayCommand::Roughness(a) => {
            let map = read_heightmap(&a.input, a.pitch_nm)?;
            let ra = roughness_ra(&map);
            if !ra.is_finite() {
                return Err(anyhow!(nvsense_core::Error::Degenerate(
                    "height map too small for a plane fit".into()
                )));
            }
            write_json(
                &a.out,
                json!({
                    "Ra_pm": ra,
                    "nx": map.nx,
                    "ny": map.ny,
                    "pitch_nm": map.pitch,
                }),
            )
        }
    }
}
