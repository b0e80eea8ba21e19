use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{usage_err, Result};
use crate::tensor::{Element, Tensor};

/// Training formulation, which also fixes the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Noise prediction with a cosine schedule; DDIM sampling.
    Ddpm,
    /// Velocity prediction on the linear noise/data path; Euler sampling.
    Flow,
}

impl std::str::FromStr for Objective {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(Objective::Ddpm),
            "flow" => Ok(Objective::Flow),
            other => Err(usage_err!("unknown objective {other:?} (ddpm|flow)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub objective: Objective,
    /// Sampling steps T.
    pub sampling_steps: usize,
    /// Schedule positions used in training; sampling step t sits at
    /// position t·positions/T.
    pub train_positions: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Flow,
            sampling_steps: 50,
            train_positions: 1000,
        }
    }
}

/// Cosine offset of the ᾱ schedule.
const COSINE_OFFSET: f64 = 0.008;
/// Smallest signal coefficient; keeps the DDIM inversion finite at t = T.
const ALPHA_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub objective: Objective,
    pub sampling_steps: usize,
    pub train_positions: usize,
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(config: &ScheduleConfig) -> Result<Self> {
        let (t, s) = (config.sampling_steps, config.train_positions);
        if t == 0 || s == 0 {
            return Err(usage_err!("schedule needs positive step counts"));
        }
        if s % t != 0 {
            return Err(usage_err!(
                "train_positions {s} must be a multiple of sampling_steps {t}"
            ));
        }
        let mut alphas = Vec::with_capacity(s + 1);
        let mut sigmas = Vec::with_capacity(s + 1);
        for p in 0..=s {
            let (a, sg) = match config.objective {
                Objective::Ddpm => ddpm_coefficients(p, s),
                Objective::Flow => {
                    let w = p as f64 / s as f64;
                    (1.0 - w, w)
                }
            };
            alphas.push(a);
            sigmas.push(sg);
        }
        Ok(Self {
            objective: config.objective,
            sampling_steps: t,
            train_positions: s,
            alphas,
            sigmas,
        })
    }

    /// Schedule position of sampling step `t` (also the model's time input).
    pub fn position(&self, step: usize) -> usize {
        step * (self.train_positions / self.sampling_steps)
    }

    /// Signal and noise coefficients at a training position: (α, σ) for
    /// ddpm, (1 − s/S, s/S) for flow.
    pub fn coefficients(&self, position: usize) -> Result<(f64, f64)> {
        if position > self.train_positions {
            return Err(usage_err!(
                "position {position} beyond schedule length {}",
                self.train_positions
            ));
        }
        Ok((self.alphas[position], self.sigmas[position]))
    }

    /// `α·z0 + σ·ε` at a training position in 1..=S.
    pub fn ddpm_corrupt<E: Element>(
        &self,
        z0: &Tensor<E>,
        eps: &Tensor<E>,
        position: usize,
    ) -> Result<Tensor<E>> {
        if position == 0 || position > self.train_positions {
            return Err(usage_err!(
                "corruption position {position} outside 1..={}",
                self.train_positions
            ));
        }
        let (a, s) = ddpm_coefficients(position, self.train_positions);
        corrupt_with(z0, eps, a, s)
    }

    /// The forward process of this schedule's objective at a position.
    pub fn corrupt<E: Element>(
        &self,
        z0: &Tensor<E>,
        noise: &Tensor<E>,
        position: usize,
    ) -> Result<Tensor<E>> {
        match self.objective {
            Objective::Ddpm => self.ddpm_corrupt(z0, noise, position),
            Objective::Flow => flow_interpolate(z0, noise, position, self.train_positions),
        }
    }
}

/// `alpha·z0 + sigma·eps`.
pub fn corrupt_with<E: Element>(
    z0: &Tensor<E>,
    eps: &Tensor<E>,
    alpha: f64,
    sigma: f64,
) -> Result<Tensor<E>> {
    z0.scale(alpha).add(&eps.scale(sigma))
}

/// Cosine-schedule (α, σ) at `position` of `len`, independent of the
/// configured objective.
pub fn ddpm_coefficients(position: usize, len: usize) -> (f64, f64) {
    let phi = |p: usize| (p as f64 / len as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2;
    let a = (phi(position).cos() / phi(0).cos()).clamp(ALPHA_FLOOR, 1.0);
    (a, (1.0 - a * a).max(0.0).sqrt())
}

/// `(1 − t/T)·z0 + (t/T)·zT` for `t ∈ 0..=T`.
pub fn flow_interpolate<E: Element>(
    z0: &Tensor<E>,
    z_t: &Tensor<E>,
    t: usize,
    total: usize,
) -> Result<Tensor<E>> {
    if t > total {
        return Err(usage_err!("flow time {t} outside 0..={total}"));
    }
    if t == 0 {
        return Ok(z0.detach());
    }
    if t == total {
        return Ok(z_t.detach());
    }
    let w = t as f64 / total as f64;
    z0.scale(1.0 - w).add(&z_t.scale(w))
}
