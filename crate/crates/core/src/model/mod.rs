//! The toy video diffusion transformer.

pub mod checkpoint;
mod config;
mod dit;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use dit::{
    blocks_executed, embed_video, forward, predict, timestep_embedding, AttentionCapture,
    ForwardOptions, ForwardOutput,
};
pub use params::{init_params, BlockParams, DiTParams, Linear};
