use serde::{Deserialize, Serialize};

use crate::error::{usage_err, Result};

/// Geometry and width of the video transformer.
///
/// Tokens are one per spatio-temporal cell (patch size 1), ordered
/// frame-major: `token(f, h, w) = f·H·W + h·W + w`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub cond_vocab: usize,
    pub cond_tokens: usize,
    pub mlp_ratio: usize,
}

impl ModelConfig {
    /// The CPU-sized configuration used by the experiments.
    pub fn toy() -> Self {
        Self {
            frames: 8,
            height: 8,
            width: 8,
            channels: 1,
            d_model: 32,
            blocks: 4,
            heads: 4,
            head_dim: 8,
            cond_vocab: 8,
            cond_tokens: 4,
            mlp_ratio: 4,
        }
    }

    /// Tiny configuration for finite-difference checks.
    pub fn micro() -> Self {
        Self {
            frames: 4,
            height: 2,
            width: 2,
            channels: 1,
            d_model: 8,
            blocks: 2,
            heads: 2,
            head_dim: 4,
            cond_vocab: 2,
            cond_tokens: 2,
            mlp_ratio: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("frames", self.frames),
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("cond_vocab", self.cond_vocab),
            ("cond_tokens", self.cond_tokens),
            ("mlp_ratio", self.mlp_ratio),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(usage_err!("model config: {name} must be positive"));
        }
        if self.d_model != self.heads * self.head_dim {
            return Err(usage_err!(
                "model config: d_model {} != heads {} x head_dim {}",
                self.d_model,
                self.heads,
                self.head_dim
            ));
        }
        if self.blocks < 1 {
            return Err(usage_err!("model config: need at least one block"));
        }
        if self.frames < 2 {
            return Err(usage_err!("model config: need at least two frames"));
        }
        if self.d_model % 2 != 0 {
            return Err(usage_err!("model config: d_model must be even"));
        }
        Ok(())
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    /// Token count H·W·F.
    pub fn tokens(&self) -> usize {
        self.spatial() * self.frames
    }

    /// Spatial-head patch count H·W·N_h.
    pub fn patches(&self) -> usize {
        self.spatial() * self.heads
    }

    /// Shape `[F, C, H, W]` of a latent.
    pub fn latent_shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn token_index(&self, f: usize, h: usize, w: usize) -> usize {
        f * self.spatial() + h * self.width + w
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}
