use std::sync::atomic::{AtomicUsize, Ordering};

use super::{BlockParams, DiTParams, ModelConfig};
use crate::error::{dim_err, usage_err, Result};
use crate::tensor::{Element, Tensor};

const NORM_EPS: f64 = 1e-5;
const TIME_MAX_PERIOD: f64 = 10_000.0;

/// Query and key projections of one self-attention block, as seen by the
/// attention itself: `[N_h, H·W·F, C_h]`, tokens frame-major. They are
/// taken right after the QKV projection (no extra normalization exists in
/// this model) and stay attached to the gradient tape.
#[derive(Debug, Clone)]
pub struct AttentionCapture<E: Element> {
    /// 1-based block index.
    pub block: usize,
    pub query: Tensor<E>,
    pub key: Tensor<E>,
}

/// What to run and what to keep during [`forward`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// 1-based block whose Q, K are captured.
    pub capture_block: Option<usize>,
    /// Stop after this 1-based block; no prediction is produced. When it
    /// equals `capture_block`, the block stops right after its Q, K.
    pub truncate_at: Option<usize>,
}

impl ForwardOptions {
    pub fn capture(block: usize) -> Self {
        Self {
            capture_block: Some(block),
            truncate_at: None,
        }
    }

    pub fn truncated_capture(block: usize) -> Self {
        Self {
            capture_block: Some(block),
            truncate_at: Some(block),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<E: Element> {
    /// `[F, C, H, W]`; `None` for truncated passes.
    pub prediction: Option<Tensor<E>>,
    pub capture: Option<AttentionCapture<E>>,
    /// Transformer blocks entered during this pass.
    pub blocks_run: usize,
    /// Full self-attention probabilities of the captured block,
    /// `[N_h, HWF, HWF]`, when requested.
    pub attention: Option<Tensor<E>>,
}

static BLOCKS_EXECUTED: AtomicUsize = AtomicUsize::new(0);

/// Process-wide count of transformer blocks entered by [`forward`].
pub fn blocks_executed() -> usize {
    BLOCKS_EXECUTED.load(Ordering::Relaxed)
}

/// Sinusoidal embedding of a (continuous) timestep position, width `dim`.
pub fn timestep_embedding<E: Element>(t: f64, dim: usize) -> Tensor<E> {
    let half = dim / 2;
    Tensor::from_fn(&[dim], |j| {
        let k = j % half;
        let freq = (-(TIME_MAX_PERIOD.ln()) * k as f64 / half as f64).exp();
        let arg = t * freq;
        E::from_f64(if j < half { arg.cos() } else { arg.sin() })
    })
}

/// `[T, D] → [N_h, T, C_h]`
fn split_heads<E: Element>(x: &Tensor<E>, heads: usize, head_dim: usize) -> Result<Tensor<E>> {
    let t = x.shape()[0];
    x.reshape(&[t, heads, head_dim])?.permute(&[1, 0, 2])
}

/// `[N_h, T, C_h] → [T, D]`
fn merge_heads<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (h, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    x.permute(&[1, 0, 2])?.reshape(&[t, h * c])
}

/// Scaled dot-product attention for head-split inputs; also returns the
/// probabilities.
fn attention<E: Element>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    head_dim: usize,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let kt = k.permute(&[0, 2, 1])?;
    let logits = q.matmul(&kt)?.scale(1.0 / (head_dim as f64).sqrt());
    let probs = logits.softmax(2)?;
    Ok((probs.matmul(v)?, probs))
}

/// `x·(1 + scale) + shift` with `[D]` modulation vectors.
fn modulate<E: Element>(x: &Tensor<E>, shift: &Tensor<E>, scale: &Tensor<E>) -> Result<Tensor<E>> {
    x.mul(&scale.add_scalar(1.0))?.add(shift)
}

fn chunk<E: Element>(v: &Tensor<E>, index: usize, width: usize) -> Result<Tensor<E>> {
    let idx: Vec<usize> = (index * width..(index + 1) * width).collect();
    v.gather(&idx, &[width])
}

/// Token sequence `[H·W·F, D]` of a latent: per-cell linear embedding plus
/// factorized spatial positions. The frame position is added after the
/// first self-attention (see [`forward`]).
pub fn embed_video<E: Element>(params: &DiTParams<E>, z: &Tensor<E>) -> Result<Tensor<E>> {
    let c = &params.config;
    if z.shape() != c.latent_shape() {
        return Err(dim_err!(
            "latent shape {:?} does not match config {:?}",
            z.shape(),
            c.latent_shape()
        ));
    }
    let cells = z
        .permute(&[0, 2, 3, 1])?
        .reshape(&[c.tokens(), c.channels])?;
    let tokens = params.embed.apply(&cells)?;
    let hs: Vec<usize> = (0..c.tokens()).map(|i| (i / c.width) % c.height).collect();
    let ws: Vec<usize> = (0..c.tokens()).map(|i| i % c.width).collect();
    let pos = params
        .pos_height
        .select_rows(&hs)?
        .add(&params.pos_width.select_rows(&ws)?)?;
    tokens.add(&pos)
}

fn frame_positions<E: Element>(params: &DiTParams<E>) -> Result<Tensor<E>> {
    let c = &params.config;
    let fs: Vec<usize> = (0..c.tokens()).map(|i| i / c.spatial()).collect();
    params.pos_frame.select_rows(&fs)
}

fn check_cond(config: &ModelConfig, cond: usize) -> Result<()> {
    if cond >= config.cond_vocab {
        return Err(usage_err!(
            "condition {cond} out of range for vocabulary of {}",
            config.cond_vocab
        ));
    }
    Ok(())
}

struct BlockOutcome<E: Element> {
    x: Option<Tensor<E>>,
    capture: Option<AttentionCapture<E>>,
    attention: Option<Tensor<E>>,
}

#[allow(clippy::too_many_arguments)]
fn run_block<E: Element>(
    params: &DiTParams<E>,
    block: &BlockParams<E>,
    index: usize,
    x: &Tensor<E>,
    time: &Tensor<E>,
    cond_tokens: &Tensor<E>,
    capture: bool,
    stop_after_capture: bool,
) -> Result<BlockOutcome<E>> {
    let c = &params.config;
    let d = c.d_model;
    let ones = Tensor::ones(&[d]);
    let zeros = Tensor::zeros(&[d]);

    let m = block.modulation.apply(time)?;
    let (shift1, scale1) = (chunk(&m, 0, d)?, chunk(&m, 1, d)?);
    let (shift2, scale2) = (chunk(&m, 2, d)?, chunk(&m, 3, d)?);

    let h = modulate(&x.layer_norm(&ones, &zeros, NORM_EPS)?, &shift1, &scale1)?;
    let q = split_heads(&block.query.apply(&h)?, c.heads, c.head_dim)?;
    let k = split_heads(&block.key.apply(&h)?, c.heads, c.head_dim)?;
    let captured = capture.then(|| AttentionCapture {
        block: index,
        query: q.clone(),
        key: k.clone(),
    });
    if stop_after_capture {
        return Ok(BlockOutcome {
            x: None,
            capture: captured,
            attention: None,
        });
    }
    let v = split_heads(&block.value.apply(&h)?, c.heads, c.head_dim)?;
    let (a, probs) = attention(&q, &k, &v, c.head_dim)?;
    let mut x = x.add(&block.attn_out.apply(&merge_heads(&a)?)?)?;
    if index == 1 {
        x = x.add(&frame_positions(params)?)?;
    }

    let h = x.layer_norm(&block.cross_norm_gain, &block.cross_norm_bias, NORM_EPS)?;
    let q = split_heads(&block.cross_query.apply(&h)?, c.heads, c.head_dim)?;
    let k = split_heads(&block.cross_key.apply(cond_tokens)?, c.heads, c.head_dim)?;
    let v = split_heads(&block.cross_value.apply(cond_tokens)?, c.heads, c.head_dim)?;
    let (a, _) = attention(&q, &k, &v, c.head_dim)?;
    let x = x.add(&block.cross_out.apply(&merge_heads(&a)?)?)?;

    let h = modulate(&x.layer_norm(&ones, &zeros, NORM_EPS)?, &shift2, &scale2)?;
    let mlp = block.mlp_out.apply(&block.mlp_in.apply(&h)?.gelu())?;
    let x = x.add(&mlp)?;
    Ok(BlockOutcome {
        x: Some(x),
        capture: captured,
        attention: capture.then_some(probs),
    })
}

/// Runs the transformer on latent `z` (`[F, C, H, W]`) with condition
/// class `cond` at timestep position `t`.
pub fn forward<E: Element>(
    params: &DiTParams<E>,
    z: &Tensor<E>,
    cond: usize,
    t: f64,
    opts: ForwardOptions,
) -> Result<ForwardOutput<E>> {
    let c = &params.config;
    check_cond(c, cond)?;
    for (what, b) in [("capture_block", opts.capture_block), ("truncate_at", opts.truncate_at)] {
        if let Some(b) = b {
            if b < 1 || b > c.blocks {
                return Err(usage_err!("{what} {b} outside 1..={}", c.blocks));
            }
        }
    }
    if let (Some(cap), Some(stop)) = (opts.capture_block, opts.truncate_at) {
        if cap > stop {
            return Err(usage_err!("capture block {cap} lies beyond truncation at {stop}"));
        }
    }

    let mut x = embed_video(params, z)?;
    let temb = timestep_embedding::<E>(t, c.d_model);
    let time = params
        .time_out
        .apply(&params.time_in.apply(&temb)?.silu())?
        .silu();
    let cond_tokens = params.cond_table.select_rows(&vec![cond; c.cond_tokens])?;

    let mut capture = None;
    let mut attention = None;
    let mut blocks_run = 0;
    for (i, block) in params.blocks.iter().enumerate() {
        let index = i + 1;
        let want = opts.capture_block == Some(index);
        let stop_here = opts.truncate_at == Some(index);
        blocks_run += 1;
        BLOCKS_EXECUTED.fetch_add(1, Ordering::Relaxed);
        let out = run_block(params, block, index, &x, &time, &cond_tokens, want, want && stop_here)?;
        if want {
            capture = out.capture;
            attention = out.attention;
        }
        if stop_here {
            return Ok(ForwardOutput {
                prediction: None,
                capture,
                blocks_run,
                attention,
            });
        }
        x = out.x.expect("complete block yields tokens");
    }

    let d = c.d_model;
    let fm = params.final_modulation.apply(&time)?;
    let h = modulate(
        &x.layer_norm(&Tensor::ones(&[d]), &Tensor::zeros(&[d]), NORM_EPS)?,
        &chunk(&fm, 0, d)?,
        &chunk(&fm, 1, d)?,
    )?;
    let out = params.head.apply(&h)?;
    let prediction = out
        .reshape(&[c.frames, c.height, c.width, c.channels])?
        .permute(&[0, 3, 1, 2])?;
    Ok(ForwardOutput {
        prediction: Some(prediction),
        capture,
        blocks_run,
        attention,
    })
}

/// Full forward returning only the prediction.
pub fn predict<E: Element>(params: &DiTParams<E>, z: &Tensor<E>, cond: usize, t: f64) -> Result<Tensor<E>> {
    Ok(forward(params, z, cond, t, ForwardOptions::default())?
        .prediction
        .expect("untruncated forward yields a prediction"))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::init_params;
    use crate::tensor::Tape;

    fn setup() -> (DiTParams<f64>, Tensor<f64>) {
        let c = ModelConfig::micro();
        let p = init_params::<f64>(&c, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Tensor::randn(&c.latent_shape(), 1.0, &mut rng);
        (p, z)
    }

    #[test]
    fn token_count_matches_grid() {
        let (p, z) = setup();
        let tokens = embed_video(&p, &z).unwrap();
        assert_eq!(tokens.shape(), &[p.config.tokens(), p.config.d_model]);
    }

    #[test]
    fn zero_video_embeds_to_positions() {
        let (mut p, _) = setup();
        p.embed.bias = Tensor::zeros(&[p.config.d_model]);
        let c = p.config.clone();
        let z = Tensor::zeros(&c.latent_shape());
        let tokens = embed_video(&p, &z).unwrap();
        let d = c.d_model;
        let idx = c.token_index(2, 1, 0);
        for j in 0..d {
            let expect = p.pos_height.data()[d + j] + p.pos_width.data()[j];
            assert_eq!(tokens.data()[idx * d + j], expect);
        }
    }

    #[test]
    fn embedding_is_local() {
        let (p, z) = setup();
        let c = &p.config;
        let mut v = z.to_vec();
        let (f, h, w) = (1, 1, 0);
        v[((f * c.channels) * c.height + h) * c.width + w] += 0.5;
        let z2 = Tensor::new(z.shape(), v).unwrap();
        let a = embed_video(&p, &z).unwrap();
        let b = embed_video(&p, &z2).unwrap();
        let d = c.d_model;
        let changed: Vec<usize> = (0..c.tokens())
            .filter(|&t| a.data()[t * d..(t + 1) * d] != b.data()[t * d..(t + 1) * d])
            .collect();
        assert_eq!(changed, vec![c.token_index(f, h, w)]);
    }

    #[test]
    fn untrained_model_predicts_zero() {
        let (p, z) = setup();
        let y = predict(&p, &z, 1, 500.0).unwrap();
        assert_eq!(y.shape(), z.shape());
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let (mut p, z) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        p.head.weight = Tensor::randn(&[p.config.d_model, p.config.channels], 0.5, &mut rng);
        let a = predict(&p, &z, 0, 300.0).unwrap();
        let b = predict(&p, &z, 0, 300.0).unwrap();
        assert!(a.bit_eq(&b));
        assert!(a.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let (p, z) = setup();
        let out = forward(&p, &z, 0, 100.0, ForwardOptions::capture(2)).unwrap();
        let a = out.attention.unwrap();
        let n = p.config.tokens();
        assert_eq!(a.shape(), &[p.config.heads, n, n]);
        for row in a.data().chunks(n) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let (p, z) = setup();
        assert!(forward(&p, &z, 0, 1.0, ForwardOptions::capture(3)).is_err());
        assert!(forward(&p, &z, 0, 1.0, ForwardOptions::capture(0)).is_err());
        assert!(forward(&p, &z, 9, 1.0, ForwardOptions::default()).is_err());
        let opts = ForwardOptions {
            capture_block: Some(2),
            truncate_at: Some(1),
        };
        assert!(forward(&p, &z, 0, 1.0, opts).is_err());
        let bad = Tensor::zeros(&[4, 1, 2, 3]);
        assert!(forward(&p, &bad, 0, 1.0, ForwardOptions::default()).is_err());
    }

    #[test]
    fn truncation_touches_only_early_blocks() {
        let (p, z) = setup();
        let tape = Tape::<f64>::new().unwrap();
        let tracked = p.try_map(|_, t| Ok(tape.watch(t))).unwrap();
        let out = forward(&tracked, &z, 0, 700.0, ForwardOptions::truncated_capture(1)).unwrap();
        assert!(out.prediction.is_none());
        assert_eq!(out.blocks_run, 1);
        let cap = out.capture.unwrap();
        let loss = cap.query.square().unwrap().sum().unwrap()
            .add(&cap.key.square().unwrap().sum().unwrap()).unwrap();
        let grads = tape.backward(&loss).unwrap();
        for (name, t) in tracked.named_tensors() {
            let g = grads.get(&t).unwrap();
            let nonzero = g.data().iter().any(|&v| v != 0.0);
            if name.starts_with("blocks.1.") || name.starts_with("head") || name.starts_with("final") {
                assert!(!nonzero, "{name} should not receive gradient");
            }
        }
        let q = grads.get(&tracked.blocks[0].query.weight).unwrap();
        assert!(q.data().iter().any(|&v| v != 0.0));
    }
}
