use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::stats::{mean, median};
use crate::diffusion::NoiseSchedule;
use crate::error::{usage_err, Result};
use crate::model::{forward, DiTParams, ForwardOptions};
use crate::parallel::parallel_map;
use crate::tedio::{temporal_attention, variability_scores, TemporalAttention};
use crate::tensor::{Element, Tensor};

/// Corruption noise of a probe run. Every clip, block and step of one
/// run shares it, so clips are compared under the same draw.
pub fn probe_noise<E: Element>(shape: &[usize], seed: u64) -> Tensor<E> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Temporal attention and per-patch scores of `video` corrupted to
/// sampling step `t` with `noise` (step 0 leaves it clean), captured at
/// `block`.
pub fn probe_clip<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    video: &Tensor<E>,
    cond: usize,
    block: usize,
    t: usize,
    noise: &Tensor<E>,
    bands: &[isize],
) -> Result<(TemporalAttention<E>, Tensor<E>)> {
    if t > schedule.sampling_steps {
        return Err(usage_err!("probe step {t} outside 0..={}", schedule.sampling_steps));
    }
    let pos = schedule.position(t);
    let z = if pos == 0 {
        video.clone()
    } else {
        schedule.corrupt(video, noise, pos)?
    };
    let out = forward(params, &z, cond, pos as f64, ForwardOptions::truncated_capture(block))?;
    let attn = temporal_attention(&out.capture.expect("capture requested"), &params.config)?;
    let scores = variability_scores(&attn, bands)?;
    Ok((attn, scores))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilityRow {
    pub block: usize,
    pub t: usize,
    /// Over all patches of all clips.
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityTable {
    /// One row per `(block, t)`, blocks outermost.
    pub rows: Vec<VariabilityRow>,
    /// `per_clip[c][r]`: mean score over patches of clip `c` for row `r`.
    pub per_clip: Vec<Vec<f64>>,
}

/// Diagonal-variability statistics of `clips` (`(video, class)`) per
/// capture block and sampling step.
pub fn variability_stats<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    clips: &[(Tensor<E>, usize)],
    blocks: &[usize],
    timesteps: &[usize],
    bands: &[isize],
    seed: u64,
    jobs: usize,
) -> Result<VariabilityTable> {
    if clips.is_empty() || blocks.is_empty() || timesteps.is_empty() {
        return Err(usage_err!("variability stats need clips, blocks and timesteps"));
    }
    let vocab = params.config.cond_vocab;
    let noise = probe_noise::<E>(&params.config.latent_shape(), seed);
    let per: Vec<Vec<Vec<f64>>> = parallel_map(clips, jobs, |_, (video, class)| {
        let mut out = Vec::with_capacity(blocks.len() * timesteps.len());
        for &b in blocks {
            for &t in timesteps {
                let (_, s) = probe_clip(params, schedule, video, class % vocab, b, t, &noise, bands)?;
                out.push(s.to_f64_vec());
            }
        }
        Ok(out)
    })?;
    let mut rows = Vec::new();
    let mut r = 0;
    for &block in blocks {
        for &t in timesteps {
            let all: Vec<f64> = per.iter().flat_map(|c| c[r].iter().copied()).collect();
            rows.push(VariabilityRow {
                block,
                t,
                mean: mean(&all),
                median: median(&all),
            });
            r += 1;
        }
    }
    let per_clip = per
        .iter()
        .map(|c| c.iter().map(|s| mean(s)).collect())
        .collect();
    Ok(VariabilityTable { rows, per_clip })
}
