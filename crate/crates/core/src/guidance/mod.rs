//! Diffusion-side guidance: noise schedule and forward noising, the denoiser
//! contract, classifier-free guidance, overlapped-semantic-component
//! suppression (OSCS) and score-distillation gradients.

mod denoiser;
mod oscs;
mod schedule;
mod sds;

pub use denoiser::{AnalyticDenoiser, Denoiser, PromptId};
pub use oscs::{
    cfg_predict, delta_components, oscs_combine, oscs_decompose, oscs_predict, DeltaComponents, GuidanceConfig,
    OscsPrediction, PROJECTION_EPS,
};
pub use schedule::{add_noise, NoiseSchedule, TimestepSampling};
pub use sds::{sds_gradient, sds_pixel_gradient};
