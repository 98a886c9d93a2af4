//! Diffusion core: noise schedules, the conditional noise predictor with
//! exact reverse-mode gradients, and the ancestral sampler.

pub mod denoiser;
pub mod sampler;
pub mod schedule;

pub use denoiser::{
    build_input, condition_embedding, denoiser_predict, dm_loss_and_grad, time_embedding,
    DenoiserParams, DiffusionBatch, NetworkLayout,
};
pub use sampler::sample;
pub use schedule::{forward_diffuse, NoiseSchedule, ScheduleKind};
