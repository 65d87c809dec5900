//! Numerical core for near-surface NV-center sensing experiments.
//!
//! The crate covers the whole chain from pulse timing to recovered physical
//! quantities:
//!
//! - [`pulses`]: ideal π-pulse trains and their exact filter functions.
//! - [`noisebath`]: parametric one-sided noise spectra and the decoherence
//!   functional that maps a sequence and a spectrum to a coherence value.
//! - [`simkit`]: photon-counting synthetic datasets for dynamical-decoupling
//!   and relaxation experiments, and the spin-contrast normalization.
//! - [`fitcore`]: least-squares estimators (stretched exponentials, T₂ scaling
//!   laws, stability fits) and spectral decomposition.
//! - [`fieldcal`]: depth calibration from proton noise, dipolar couplings and
//!   the single-nuclear-spin integration-time budget.
//! - [`smassay`]: single-molecule surface-assay statistics.
//!
//! Everything is `no_std` with `alloc`; file formats and the command-line
//! frontend live in the companion `nvsense-cli` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod consts;
mod error;
pub mod fieldcal;
pub mod fitcore;
pub(crate) mod math;
pub mod noisebath;
pub mod pulses;
pub mod quad;
pub mod simkit;
pub mod smassay;

pub use error::{Error, Result};
