//! Single-molecule surface-assay statistics: synthetic fluorescence frames,
//! spot detection, adsorption density, photobleach steps, roughness and
//! layer stability.

mod density;
mod image;
mod steps;
mod surface;

pub use density::{
    estimate_density, fit_titration, poisson_interval, TitrationFit, TitrationPoint, CI_LEVEL,
};
pub use image::{
    detect_spots, render_image, synth_image, DetectParams, Detection, ImageFrame, Spot,
    SynthParams, SyntheticImage, DEFAULT_PIXEL_PITCH_UM, DEFAULT_PSF_SIGMA_PX,
};
pub use steps::{
    classify_steps, synth_bleach_trace, BleachSpec, StepClassification, StepParams, TraceSeries,
};
pub use surface::{
    etch_time, gaussian_chain_extent, roughness_ra, stability_pipeline, HeightMap, StabilityInput,
    StabilityReport, ETCH_RATE_NM_PER_MIN,
};
