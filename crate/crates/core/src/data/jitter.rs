use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{reflect, SceneSpec, VideoDims};
use crate::error::{usage_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterMode {
    /// Re-render with i.i.d. uniform offsets of up to `amplitude` cells
    /// per axis and frame.
    PositionNoise,
    /// Shuffle frames inside consecutive windows of `amplitude` frames.
    FrameShuffle,
    /// Move the object to a random place at `amplitude` random frames;
    /// it keeps moving from there.
    Teleport,
}

impl std::str::FromStr for JitterMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position_noise" => Ok(Self::PositionNoise),
            "frame_shuffle" => Ok(Self::FrameShuffle),
            "teleport" => Ok(Self::Teleport),
            other => Err(usage_err!(
                "unknown jitter mode {other:?} (position_noise|frame_shuffle|teleport)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterSpec {
    pub mode: JitterMode,
    pub amplitude: f64,
    pub seed: u64,
}

/// Applies `jitter` to `video`, the coherent render of `scene`. Amplitude
/// 0 returns the input unchanged.
pub fn inject_jitter(
    scene: &SceneSpec,
    dims: &VideoDims,
    video: &Tensor<f32>,
    jitter: &JitterSpec,
) -> Result<Tensor<f32>> {
    if !(jitter.amplitude >= 0.0) || !jitter.amplitude.is_finite() {
        return Err(usage_err!("jitter amplitude must be finite and non-negative"));
    }
    scene.validate(dims)?;
    if video.shape() != dims.shape() {
        return Err(usage_err!(
            "video shape {:?} does not match {:?}",
            video.shape(),
            dims.shape()
        ));
    }
    if jitter.amplitude == 0.0 {
        return Ok(video.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(jitter.seed);
    let span = scene.span(dims);
    let a = jitter.amplitude;
    match jitter.mode {
        JitterMode::PositionNoise => {
            let positions: Vec<[f64; 2]> = (0..dims.frames)
                .map(|f| {
                    let p = scene.position(dims, f);
                    let dx = rng.gen_range(-a..=a);
                    let dy = rng.gen_range(-a..=a);
                    [reflect(p[0] + dx, span[0]), reflect(p[1] + dy, span[1])]
                })
                .collect();
            scene.render_at(dims, &positions)
        }
        JitterMode::FrameShuffle => {
            let window = a.round() as usize;
            let mut order: Vec<usize> = (0..dims.frames).collect();
            if window > 1 {
                for chunk in order.chunks_mut(window) {
                    chunk.shuffle(&mut rng);
                }
            }
            let frame = dims.channels * dims.height * dims.width;
            let src = video.data();
            let data = order
                .iter()
                .flat_map(|&f| src[f * frame..(f + 1) * frame].iter().copied())
                .collect();
            Tensor::new(video.shape(), data)
        }
        JitterMode::Teleport => {
            let events = (a.round() as usize).min(dims.frames - 1);
            let mut frames: Vec<usize> = (1..dims.frames).collect();
            frames.shuffle(&mut rng);
            let mut jumps = frames[..events].to_vec();
            jumps.sort_unstable();
            let mut offset = [0.0, 0.0];
            let mut next = jumps.iter().peekable();
            let positions: Vec<[f64; 2]> = (0..dims.frames)
                .map(|f| {
                    let base = [
                        scene.start[0] + scene.velocity[0] * f as f64,
                        scene.start[1] + scene.velocity[1] * f as f64,
                    ];
                    if next.peek() == Some(&&f) {
                        next.next();
                        let target = [rng.gen::<f64>() * span[0], rng.gen::<f64>() * span[1]];
                        offset = [target[0] - base[0], target[1] - base[1]];
                    }
                    [
                        reflect(base[0] + offset[0], span[0]),
                        reflect(base[1] + offset[1], span[1]),
                    ]
                })
                .collect();
            scene.render_at(dims, &positions)
        }
    }
}
