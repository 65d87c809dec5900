//! Estimators: coherence-decay fits, T₂ scaling laws, stability fits and
//! spectral decomposition.
//!
//! Nonlinear fits share one box-constrained Levenberg–Marquardt solver
//! ([`MAX_ITERATIONS`] iterations); standard errors come from the linearized
//! covariance `s²·(JᵀWJ)⁻¹` with `s²` the reduced residual variance.

use alloc::vec::Vec;

mod lm;
mod scaling;
mod spectral;
mod stability;
mod stats;
mod stretched;

pub use lm::MAX_ITERATIONS;
pub use scaling::{fit_t2_vs_n, power_model, saturation_model, ScalingMode, T2ScalingFit};
pub use spectral::{
    estimate_sample, spectral_decompose, ContrastReference, SkipReason, SkippedProbe,
    SpectralDecomposition, SpectrumSample,
};
pub use stability::{fit_exp_decay, fit_linear};
pub use stats::{t2_change_stats, ChangeStats};
pub use stretched::{fit_stretched_exp, stretched_exp, STRETCH_BOUNDS, STRETCH_STARTS};

/// Which model a [`FitResult`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    /// `A·exp[−(t/T2)^n]`
    StretchedExp,
    /// `T2(N) = T2(1)·[N_sat^s + (N^s − N_sat^s)·exp(−N/N_sat)]`
    T2Saturation,
    /// `T2(N) = T2(1)·N^s`
    T2PowerLaw,
    /// `V0·2^(−t/half_life)`
    ExpDecay,
    /// `intercept + slope·t`
    Linear,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::StretchedExp => "stretched_exp",
            ModelId::T2Saturation => "t2_saturation",
            ModelId::T2PowerLaw => "t2_power_law",
            ModelId::ExpDecay => "exp_decay",
            ModelId::Linear => "linear",
        }
    }
}

/// Something a caller should know about a fit that still produced numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitNote {
    /// The named parameter ended on a bound of its allowed range.
    AtBound(&'static str),
    /// Too few residual degrees of freedom (or a singular Jacobian) for
    /// standard errors.
    StdErrUndefined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParam {
    pub name: &'static str,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelId,
    pub params: Vec<FitParam>,
    /// `sqrt(Σ wᵢ rᵢ²)` at the solution.
    pub residual_norm: f64,
    pub n_points: usize,
    /// Optimizer converged and every parameter and standard error is finite.
    pub converged: bool,
    pub notes: Vec<FitNote>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.stderr)
    }

    /// Build a result, deriving `converged` from finiteness and notes.
    pub(crate) fn new(
        model: ModelId,
        params: Vec<FitParam>,
        residual_norm: f64,
        n_points: usize,
        mut notes: Vec<FitNote>,
    ) -> Self {
        let finite = params
            .iter()
            .all(|p| p.value.is_finite() && p.stderr.is_finite());
        if params.iter().any(|p| !p.stderr.is_finite())
            && !notes.contains(&FitNote::StdErrUndefined)
        {
            notes.push(FitNote::StdErrUndefined);
        }
        let pinned = notes.iter().any(|n| matches!(n, FitNote::AtBound(_)));
        FitResult {
            model,
            params,
            residual_norm,
            n_points,
            converged: finite && !pinned,
            notes,
        }
    }
}

pub(crate) fn check_finite(name: &str, xs: &[f64]) -> crate::Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::InvalidInput(alloc::format!(
            "{name} contains non-finite values"
        )))
    }
}
