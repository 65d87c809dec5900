//! Run configuration: a TOML document with one table per subsystem.
//!
//! Every table is optional and falls back to the defaults below, but a table
//! that is present must be complete. Unknown keys are rejected.
//!
//! ```toml
//! master_seed = 1
//!
//! [readout]
//! f0 = 0.063
//! f1 = 0.048
//! t_read_us = 2.0
//!
//! [field]
//! B0_gauss = 1750.0
//!
//! [bath]
//! variant = "lorentzian"
//! variance = 1.75e12
//! tau_c_us = 0.01
//!
//! [sense]
//! snr_target = 8.5
//! t_read_us = 4.0
//! stretch = 1.8
//! n_logic = 1
//! t2_us = 31.0
//! coupling_hz = 160.0
//!
//! [smassay]
//! pixel_pitch_um = 0.22
//! psf_sigma_px = 1.3
//! ```

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context};
use nvsense_core::consts::TESLA_PER_GAUSS;
use nvsense_core::fieldcal::SensingBudget;
use nvsense_core::noisebath::{proton_bath_spectrum, NoiseSpectrum, DEFAULT_TAU_H};
use nvsense_core::simkit::ReadoutModel;
use nvsense_core::smassay::{DEFAULT_PIXEL_PITCH_UM, DEFAULT_PSF_SIGMA_PX};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub readout: ReadoutSection,
    pub field: FieldSection,
    pub bath: BathConfig,
    pub sense: SenseSection,
    pub smassay: SmassaySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 1,
            readout: ReadoutSection::default(),
            field: FieldSection::default(),
            bath: BathConfig::default(),
            sense: SenseSection::default(),
            smassay: SmassaySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub f0: f64,
    pub f1: f64,
    pub t_read_us: f64,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        let r = ReadoutModel::default();
        ReadoutSection {
            f0: r.f0,
            f1: r.f1,
            t_read_us: r.t_read * 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(rename = "B0_gauss")]
    pub b0_gauss: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection { b0_gauss: 1750.0 }
    }
}

/// Noise bath. Rates in rad²/s, times in µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum BathConfig {
    None,
    White {
        level: f64,
    },
    Lorentzian {
        variance: f64,
        tau_c_us: f64,
    },
    PowerLaw {
        amplitude: f64,
        exponent: f64,
    },
    /// Proton line at the Larmor frequency of `[field] B0_gauss`.
    Proton {
        rho_h: f64,
        depth_nm: f64,
        tau_h_us: f64,
    },
    Sum {
        components: Vec<BathConfig>,
    },
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig::Lorentzian {
            variance: 1.75e12,
            tau_c_us: 0.01,
        }
    }
}

impl BathConfig {
    pub fn spectrum(&self, b0_tesla: f64) -> nvsense_core::Result<NoiseSpectrum> {
        Ok(match self {
            BathConfig::None => NoiseSpectrum::Sum(Vec::new()),
            BathConfig::White { level } => NoiseSpectrum::white(*level)?,
            BathConfig::Lorentzian { variance, tau_c_us } => {
                NoiseSpectrum::lorentzian(*variance, tau_c_us * 1e-6)?
            }
            BathConfig::PowerLaw {
                amplitude,
                exponent,
            } => NoiseSpectrum::power_law(*amplitude, *exponent)?,
            BathConfig::Proton {
                rho_h,
                depth_nm,
                tau_h_us,
            } => proton_bath_spectrum(*rho_h, depth_nm * 1e-9, b0_tesla, tau_h_us * 1e-6)?,
            BathConfig::Sum { components } => NoiseSpectrum::Sum(
                components
                    .iter()
                    .map(|c| c.spectrum(b0_tesla))
                    .collect::<nvsense_core::Result<_>>()?,
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseSection {
    pub snr_target: f64,
    /// Readout window of the sensing protocol, µs.
    pub t_read_us: f64,
    pub stretch: f64,
    pub n_logic: u32,
    pub t2_us: f64,
    /// Coupling to the target spin, Hz (multiplied by 2π internally).
    pub coupling_hz: f64,
}

impl Default for SenseSection {
    /// Grid-calibrated against the 2.8 h single-spin estimate.
    fn default() -> Self {
        SenseSection {
            snr_target: 8.5,
            t_read_us: 4.0,
            stretch: 1.8,
            n_logic: 1,
            t2_us: 31.0,
            coupling_hz: 160.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmassaySection {
    pub pixel_pitch_um: f64,
    pub psf_sigma_px: f64,
}

impl Default for SmassaySection {
    fn default() -> Self {
        SmassaySection {
            pixel_pitch_um: DEFAULT_PIXEL_PITCH_UM,
            psf_sigma_px: DEFAULT_PSF_SIGMA_PX,
        }
    }
}

fn positive(name: &str, v: f64) -> anyhow::Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bail!("config: {name} must be positive and finite, got {v}")
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("config {}", p.display()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        // Serialization of plain tables cannot fail.
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.readout_model()?;
        positive("field.B0_gauss", self.field.b0_gauss)?;
        self.bath.spectrum(self.b0_tesla())?;
        self.budget()?.validate()?;
        positive("smassay.pixel_pitch_um", self.smassay.pixel_pitch_um)?;
        positive("smassay.psf_sigma_px", self.smassay.psf_sigma_px)?;
        Ok(())
    }

    pub fn readout_model(&self) -> anyhow::Result<ReadoutModel> {
        let r = &self.readout;
        Ok(ReadoutModel::new(r.f0, r.f1, r.t_read_us * 1e-6)?)
    }

    pub fn b0_tesla(&self) -> f64 {
        self.field.b0_gauss * TESLA_PER_GAUSS
    }

    pub fn noise(&self) -> anyhow::Result<NoiseSpectrum> {
        Ok(self.bath.spectrum(self.b0_tesla())?)
    }

    /// Proton linewidth for depth fits: the bath's own when it has a proton
    /// component, otherwise the default.
    pub fn tau_h(&self) -> f64 {
        fn find(b: &BathConfig) -> Option<f64> {
            match b {
                BathConfig::Proton { tau_h_us, .. } => Some(tau_h_us * 1e-6),
                BathConfig::Sum { components } => components.iter().find_map(find),
                _ => None,
            }
        }
        find(&self.bath).unwrap_or(DEFAULT_TAU_H)
    }

    pub fn budget(&self) -> anyhow::Result<SensingBudget> {
        let s = &self.sense;
        let b = SensingBudget {
            f0: self.readout.f0,
            f1: self.readout.f1,
            t_read: s.t_read_us * 1e-6,
            t2: s.t2_us * 1e-6,
            stretch: s.stretch,
            coupling: 2.0 * PI * s.coupling_hz,
            snr_target: s.snr_target,
            n_logic: s.n_logic,
        };
        b.validate()?;
        Ok(b)
    }
}
