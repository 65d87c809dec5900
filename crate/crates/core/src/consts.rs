//! Physical constants in SI units.

use core::f64::consts::PI;

/// NV electron gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_E: f64 = 1.760_859e11;
/// ¹H gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_H: f64 = 2.675_222e8;
/// ¹³C gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_C13: f64 = 6.728_284e7;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// μ₀/4π, T·m·A⁻¹.
pub const MU0_OVER_4PI: f64 = 1.0e-7;
/// Natural abundance of ¹³C.
pub const C13_ABUNDANCE: f64 = 0.0107;

/// Reference angular frequency for power-law spectra (2π·1 MHz).
pub const POWER_LAW_REF_OMEGA: f64 = 2.0 * PI * 1.0e6;

/// Tetrahedral angle between a ⟨111⟩ NV axis and the normal of a (100) face, rad.
pub fn nv_axis_tilt_100() -> f64 {
    libm::acos(1.0 / libm::sqrt(3.0))
}

/// Tesla per gauss.
pub const TESLA_PER_GAUSS: f64 = 1.0e-4;
