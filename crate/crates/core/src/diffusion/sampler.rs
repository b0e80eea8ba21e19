use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NoiseSchedule, Objective};
use crate::error::{usage_err, Result};
use crate::model::{forward, DiTParams, ForwardOptions};
use crate::tedio::{latent_refine, BlockStats, RefineEvent, TedioConfig};
use crate::tensor::{Element, Tensor};

/// Deterministic update from sampling step `t` to `t − 1` given the
/// model's prediction at `z`: DDIM on the noise estimate for ddpm, one
/// Euler step of size 1/T on the velocity for flow.
pub fn denoise_with<E: Element>(
    schedule: &NoiseSchedule,
    z: &Tensor<E>,
    t: usize,
    prediction: &Tensor<E>,
) -> Result<Tensor<E>> {
    if t == 0 || t > schedule.sampling_steps {
        return Err(usage_err!(
            "denoise step t = {t} outside 1..={}",
            schedule.sampling_steps
        ));
    }
    match schedule.objective {
        Objective::Ddpm => {
            let (a, s) = schedule.coefficients(schedule.position(t))?;
            let (a_next, s_next) = schedule.coefficients(schedule.position(t - 1))?;
            let x0 = z.sub(&prediction.scale(s))?.scale(1.0 / a);
            x0.scale(a_next).add(&prediction.scale(s_next))
        }
        Objective::Flow => z.sub(&prediction.scale(1.0 / schedule.sampling_steps as f64)),
    }
}

/// One model evaluation plus [`denoise_with`]. Returns the new latent and
/// the number of blocks run.
pub fn denoise_step<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    z: &Tensor<E>,
    cond: usize,
    t: usize,
) -> Result<(Tensor<E>, usize)> {
    if t == 0 {
        return Err(usage_err!("cannot denoise past t = 0"));
    }
    let out = forward(params, z, cond, schedule.position(t) as f64, ForwardOptions::default())?;
    let pred = out.prediction.expect("untruncated forward yields a prediction");
    Ok((denoise_with(schedule, z, t, &pred)?, out.blocks_run))
}

/// Initial latent `z_T ~ N(0, I)` for a seed.
pub fn initial_latent<E: Element>(params: &DiTParams<E>, seed: u64) -> Tensor<E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(&params.config.latent_shape(), 1.0, &mut rng)
}

#[derive(Debug, Clone)]
pub struct SampleOutput<E: Element> {
    pub z0: Tensor<E>,
    /// Refinement iterations in execution order.
    pub events: Vec<RefineEvent>,
    pub stats: BlockStats,
}

/// Runs the sampler from `z_T` (drawn from `seed`) down to `z_0`,
/// refining the latent before each selected step when `tedio` is given.
pub fn sample<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    cond: usize,
    seed: u64,
    tedio: Option<&TedioConfig>,
) -> Result<SampleOutput<E>> {
    sample_from(params, schedule, cond, initial_latent(params, seed), tedio)
}

/// [`sample`] from an explicit starting latent.
pub fn sample_from<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    cond: usize,
    z_start: Tensor<E>,
    tedio: Option<&TedioConfig>,
) -> Result<SampleOutput<E>> {
    if let Some(cfg) = tedio {
        cfg.validate(&params.config, schedule.sampling_steps)?;
    }
    let steps = schedule.sampling_steps;
    let mut z = z_start.detach();
    let mut events = Vec::new();
    let mut stats = BlockStats::default();
    for t in (1..=steps).rev() {
        if let Some(cfg) = tedio.filter(|c| c.optimizes(t, steps)) {
            let pos = schedule.position(t) as f64;
            let (refined, log) = latent_refine(params, &z, cond, t, pos, cfg, &mut stats)?;
            z = refined;
            events.extend(log);
        }
        let (next, blocks) = denoise_step(params, schedule, &z, cond, t)?;
        stats.baseline_forward += blocks;
        z = next;
    }
    Ok(SampleOutput { z0: z, events, stats })
}
