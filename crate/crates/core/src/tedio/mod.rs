//! Latent refinement that smooths the diagonals of per-patch temporal
//! attention maps.

mod attention;
mod config;
mod loss;
mod refine;
mod score;

pub use attention::{temporal_attention, TemporalAttention};
pub use config::{TedioConfig, DEFAULT_BLOCK, DEFAULT_ETA};
pub use loss::{tedio_loss, top_k_indices};
pub use refine::{gradient_step, latent_refine, tedio_objective, BlockStats, Objective, RefineEvent};
pub use score::{extract_band, variability_score, variability_scores};
