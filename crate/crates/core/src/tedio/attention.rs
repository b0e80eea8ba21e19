use crate::error::{dim_err, Result};
use crate::model::{AttentionCapture, ModelConfig};
use crate::tensor::{Element, Tensor};

/// Per-patch frame-to-frame attention, `[P, F, F]` with `P = H·W·N_h` and
/// patch index `p = (h·W + w)·N_h + head`.
#[derive(Debug, Clone)]
pub struct TemporalAttention<E: Element> {
    pub values: Tensor<E>,
    pub frames: usize,
    pub patches: usize,
}

impl<E: Element> TemporalAttention<E> {
    pub fn patch_index(config: &ModelConfig, h: usize, w: usize, head: usize) -> usize {
        (h * config.width + w) * config.heads + head
    }

    /// Row-major `F×F` map of patch `p`, detached.
    pub fn map(&self, p: usize) -> Result<Tensor<E>> {
        let f2 = self.frames * self.frames;
        Tensor::from_slice(&[self.frames, self.frames], &self.values.data()[p * f2..(p + 1) * f2])
    }
}

/// Regroups captured Q, K from `[N_h, F·H·W, C_h]` into
/// `[H·W·N_h, F, C_h]` and applies a softmax over frames per patch.
/// Stays on the gradient tape.
pub fn temporal_attention<E: Element>(
    capture: &AttentionCapture<E>,
    config: &ModelConfig,
) -> Result<TemporalAttention<E>> {
    let expect = [config.heads, config.tokens(), config.head_dim];
    for (what, t) in [("query", &capture.query), ("key", &capture.key)] {
        if t.shape() != expect {
            return Err(dim_err!(
                "captured {what} has shape {:?}, expected {:?} for this config",
                t.shape(),
                expect
            ));
        }
    }
    let (f, hw, nh, ch) = (config.frames, config.spatial(), config.heads, config.head_dim);
    let regroup = |t: &Tensor<E>| {
        t.reshape(&[nh, f, hw, ch])?
            .permute_reshape(&[2, 0, 1, 3], &[hw * nh, f, ch])
    };
    let q = regroup(&capture.query)?;
    let k = regroup(&capture.key)?;
    let logits = q
        .matmul(&k.permute(&[0, 2, 1])?)?
        .scale(1.0 / (ch as f64).sqrt());
    Ok(TemporalAttention {
        values: logits.softmax(2)?,
        frames: f,
        patches: hw * nh,
    })
}
