//! Noise schedules, forward corruption, and reverse-time samplers.

pub mod sampler;
pub mod schedule;

pub use sampler::{
    ddim_step, ddim_timesteps, ddpm_step, edm_euler_step, sample, SamplerKind, SamplerSpec,
};
pub use schedule::{
    edm_noise, forward_diffuse, sample_sigma_train, DiscreteSchedule, EdmSchedule, NoiseSchedule,
};
