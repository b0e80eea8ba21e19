use crate::error::{dim_err, usage_err, Result};
use crate::tensor::{Element, Tensor};

/// Default `|Δ|` threshold of [`dynamic_proxy`], in `[-1, 1]` pixel units.
pub const DYNAMIC_THRESHOLD: f64 = 0.05;

/// Consecutive-frame absolute differences of a `[F, ...]` video.
fn frame_diffs<E: Element>(video: &Tensor<E>) -> Result<impl Iterator<Item = f64> + '_> {
    let frames = *video
        .shape()
        .first()
        .ok_or_else(|| dim_err!("a video needs a frame axis"))?;
    if frames < 2 {
        return Err(usage_err!("need at least two frames, got {frames}"));
    }
    let per = video.numel() / frames;
    let d = video.data();
    Ok((per..d.len()).map(move |i| (d[i].to_f64() - d[i - per].to_f64()).abs()))
}

/// Mean absolute difference between consecutive frames over all pixels.
pub fn flicker_score<E: Element>(video: &Tensor<E>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for d in frame_diffs(video)? {
        sum += d;
        n += 1;
    }
    Ok(sum / n as f64)
}

/// Fraction of (pixel, consecutive-frame pair) sites whose change exceeds
/// `threshold`. A motion proxy, not an optical-flow measure.
pub fn dynamic_proxy<E: Element>(video: &Tensor<E>, threshold: f64) -> Result<f64> {
    if !(threshold >= 0.0) {
        return Err(usage_err!("threshold must be non-negative, got {threshold}"));
    }
    let (mut hits, mut n) = (0usize, 0usize);
    for d in frame_diffs(video)? {
        hits += usize::from(d > threshold);
        n += 1;
    }
    Ok(hits as f64 / n as f64)
}
