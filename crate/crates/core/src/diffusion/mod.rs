//! Noise schedules, training objectives and deterministic samplers.

mod sampler;
mod schedule;
mod train;

pub use sampler::{denoise_step, denoise_with, initial_latent, sample, sample_from, SampleOutput};
pub use schedule::{
    corrupt_with, ddpm_coefficients, flow_interpolate, NoiseSchedule, Objective, ScheduleConfig,
};
pub use train::{objective_loss, TrainConfig, Trainer};
