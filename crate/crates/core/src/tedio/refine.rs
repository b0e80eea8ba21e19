use serde::Serialize;

use super::{temporal_attention, tedio_loss, variability_scores, TedioConfig, TemporalAttention};
use crate::error::{Error, Result};
use crate::model::{forward, DiTParams, ForwardOptions};
use crate::tensor::{Element, Tape, Tensor};

/// One refinement iteration: the loss evaluated before the update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineEvent {
    /// Sampling step being refined.
    pub t: usize,
    /// 0-based iteration.
    pub iter: usize,
    pub loss: f64,
    /// Patches selected by the top-k rule in this iteration.
    pub selected: Vec<usize>,
}

/// Block executions during one sampling run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BlockStats {
    /// Blocks run by the denoising passes.
    pub baseline_forward: usize,
    /// Blocks run by truncated refinement passes.
    pub refine_forward: usize,
    /// Blocks traversed by refinement backward passes.
    pub refine_backward: usize,
    /// Refinement iterations performed.
    pub iterations: usize,
}

impl BlockStats {
    pub fn add(&mut self, other: &BlockStats) {
        self.baseline_forward += other.baseline_forward;
        self.refine_forward += other.refine_forward;
        self.refine_backward += other.refine_backward;
        self.iterations += other.iterations;
    }
}

/// Everything computed from one truncated pass.
pub struct Objective<E: Element> {
    pub loss: Tensor<E>,
    pub scores: Tensor<E>,
    pub attention: TemporalAttention<E>,
    pub selected: Vec<usize>,
    pub blocks_run: usize,
}

/// Truncated forward to the capture block followed by temporal attention,
/// band scores and the top-k loss. Whatever `z` is tracked by stays
/// attached.
pub fn tedio_objective<E: Element>(
    params: &DiTParams<E>,
    z: &Tensor<E>,
    cond: usize,
    t_pos: f64,
    config: &TedioConfig,
) -> Result<Objective<E>> {
    let out = forward(params, z, cond, t_pos, ForwardOptions::truncated_capture(config.block))?;
    let capture = out.capture.expect("capture block was requested");
    let attention = temporal_attention(&capture, &params.config)?;
    let scores = variability_scores(&attention, &config.bands)?;
    let (loss, selected) = tedio_loss(&scores, config.k)?;
    Ok(Objective {
        loss,
        scores,
        attention,
        selected,
        blocks_run: out.blocks_run,
    })
}

/// `z − η·grad`, detached.
pub fn gradient_step<E: Element>(z: &Tensor<E>, grad: &Tensor<E>, eta: f64) -> Result<Tensor<E>> {
    if z.shape() != grad.shape() {
        return Err(crate::error::dim_err!(
            "gradient shape {:?} differs from latent {:?}",
            grad.shape(),
            z.shape()
        ));
    }
    let eta = E::from_f64(eta);
    let next = z.data().iter().zip(grad.data()).map(|(&v, &g)| v - eta * g).collect();
    Tensor::new(z.shape(), next)
}

/// `n_iters` plain gradient steps `z ← z − η·∇z L` at sampling step `t`
/// (model time `t_pos`). Returns the refined latent, detached, and one
/// event per iteration.
pub fn latent_refine<E: Element>(
    params: &DiTParams<E>,
    z: &Tensor<E>,
    cond: usize,
    t: usize,
    t_pos: f64,
    config: &TedioConfig,
    stats: &mut BlockStats,
) -> Result<(Tensor<E>, Vec<RefineEvent>)> {
    let mut z = z.detach();
    let mut events = Vec::with_capacity(config.n_iters);
    for iter in 0..config.n_iters {
        let fail = |msg: String| Error::Refinement { t, iter, msg };
        let tape = Tape::<E>::new()?;
        let zw = tape.watch(&z);
        let obj = tedio_objective(params, &zw, cond, t_pos, config)?;
        let loss = obj.loss.item()?.to_f64();
        if !loss.is_finite() {
            return Err(fail(format!("non-finite loss {loss}")));
        }
        let grad = tape
            .backward(&obj.loss)?
            .get(&zw)
            .expect("latent is watched");
        if !grad.all_finite() {
            return Err(fail("non-finite gradient".into()));
        }
        stats.refine_forward += obj.blocks_run;
        stats.refine_backward += obj.blocks_run;
        stats.iterations += 1;
        z = gradient_step(&z, &grad, config.eta)?;
        events.push(RefineEvent {
            t,
            iter,
            loss,
            selected: obj.selected,
        });
    }
    Ok((z, events))
}
