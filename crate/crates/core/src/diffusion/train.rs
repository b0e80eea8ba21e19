use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NoiseSchedule, Objective};
use crate::error::{usage_err, Error, Result};
use crate::model::{predict, DiTParams};
use crate::tensor::{Element, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// 0 gives plain gradient descent.
    pub momentum: f64,
    /// Global gradient-norm clip, if any.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 4,
            lr: 0.05,
            momentum: 0.9,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

/// Per-sample objective at a fixed schedule position and noise draw:
/// `mean((ε − ε_θ(z_t))²)` for ddpm, `mean(((z_T − z_0) − u_θ(z_t))²)` for
/// flow.
pub fn objective_loss<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    z0: &Tensor<E>,
    cond: usize,
    position: usize,
    noise: &Tensor<E>,
) -> Result<Tensor<E>> {
    if position == 0 {
        return Err(usage_err!("training position must be at least 1"));
    }
    let z_t = schedule.corrupt(z0, noise, position)?;
    let pred = predict(params, &z_t, cond, position as f64)?;
    let target = match schedule.objective {
        Objective::Ddpm => noise.clone(),
        Objective::Flow => noise.sub(z0)?,
    };
    pred.sub(&target)?.square()?.mean()
}

/// Minibatch gradient descent (optionally with heavy-ball momentum) on
/// either objective.
pub struct Trainer {
    pub params: DiTParams<f32>,
    schedule: NoiseSchedule,
    config: TrainConfig,
    velocity: Vec<Vec<f32>>,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(params: DiTParams<f32>, schedule: NoiseSchedule, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(usage_err!("batch_size must be positive"));
        }
        if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.momentum) {
            return Err(usage_err!(
                "need lr > 0 and momentum in [0, 1), got {} and {}",
                config.lr,
                config.momentum
            ));
        }
        let velocity = params
            .named_tensors()
            .iter()
            .map(|(_, t)| vec![0.0; t.numel()])
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            params,
            schedule,
            config,
            velocity,
            rng,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// One update on `batch` of `(clean latent, class)`; returns the mean
    /// loss before the update.
    pub fn step(&mut self, batch: &[(Tensor<f32>, usize)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(usage_err!("empty training batch"));
        }
        let names = self.params.named_tensors();
        let mut grad_sum: Vec<Vec<f32>> = names.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let mut loss_sum = 0.0;
        for (z0, cond) in batch {
            let position = self.rng.gen_range(1..=self.schedule.train_positions);
            let noise = Tensor::<f32>::randn(z0.shape(), 1.0, &mut self.rng);
            let tape = Tape::<f32>::new()?;
            let tracked = self.params.try_map(|_, t| Ok(tape.watch(t)))?;
            let loss = objective_loss(&tracked, &self.schedule, z0, *cond, position, &noise)?;
            let value = loss.item()?.to_f64();
            if !value.is_finite() {
                return Err(Error::Training {
                    step: self.step,
                    msg: format!("non-finite loss {value}"),
                });
            }
            loss_sum += value;
            let grads = tape.backward(&loss)?;
            for (acc, (_, t)) in grad_sum.iter_mut().zip(tracked.named_tensors()) {
                let g = grads.get(&t).expect("every parameter is watched");
                for (a, v) in acc.iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
        }
        let inv = 1.0 / batch.len() as f32;
        let mut norm_sq = 0.0f64;
        for g in grad_sum.iter_mut() {
            for v in g.iter_mut() {
                *v *= inv;
                norm_sq += (*v as f64) * (*v as f64);
            }
        }
        let clip = match self.config.grad_clip {
            Some(max) if norm_sq.sqrt() > max => (max / norm_sq.sqrt()) as f32,
            _ => 1.0,
        };
        if !norm_sq.is_finite() {
            return Err(Error::Training {
                step: self.step,
                msg: "non-finite gradient".into(),
            });
        }
        let lr = self.config.lr as f32;
        let mu = self.config.momentum as f32;
        let mut updated = Vec::with_capacity(names.len());
        for ((_, t), (g, v)) in names.iter().zip(grad_sum.iter().zip(self.velocity.iter_mut())) {
            let mut data = t.to_vec();
            for ((p, &gi), vi) in data.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = mu * *vi + clip * gi;
                *p -= lr * *vi;
            }
            updated.push(Tensor::new(t.shape(), data)?);
        }
        let mut it = updated.into_iter();
        self.params = self.params.try_map(|_, _| Ok(it.next().expect("same parameter count")))?;
        if !self.params.all_finite() {
            return Err(Error::Training {
                step: self.step,
                msg: "parameters became non-finite".into(),
            });
        }
        self.step += 1;
        Ok(loss_sum / batch.len() as f64)
    }

    /// Runs `config.steps` updates drawing minibatches from `data` with the
    /// trainer's generator; `on_step(step, loss)` sees every loss.
    pub fn fit(
        &mut self,
        data: &[(Tensor<f32>, usize)],
        mut on_step: impl FnMut(usize, f64),
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(usage_err!("no training clips"));
        }
        let mut losses = Vec::with_capacity(self.config.steps);
        for _ in 0..self.config.steps {
            let batch: Vec<(Tensor<f32>, usize)> = (0..self.config.batch_size)
                .map(|_| data[self.rng.gen_range(0..data.len())].clone())
                .collect();
            let loss = self.step(&batch)?;
            on_step(self.step, loss);
            losses.push(loss);
        }
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleConfig;
    use crate::model::{init_params, ModelConfig};

    fn trainer(objective: Objective, seed: u64) -> Trainer {
        let c = ModelConfig::micro();
        let p = init_params::<f32>(&c, 0).unwrap();
        let s = NoiseSchedule::new(&ScheduleConfig {
            objective,
            ..ScheduleConfig::default()
        })
        .unwrap();
        Trainer::new(
            p,
            s,
            TrainConfig {
                steps: 5,
                batch_size: 2,
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap()
    }

    fn data() -> Vec<(Tensor<f32>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..3)
            .map(|i| (Tensor::randn(&ModelConfig::micro().latent_shape(), 0.5, &mut rng), i % 2))
            .collect()
    }

    #[test]
    fn identical_seed_identical_trajectory() {
        let a = trainer(Objective::Ddpm, 4).fit(&data(), |_, _| {}).unwrap();
        let b = trainer(Objective::Ddpm, 4).fit(&data(), |_, _| {}).unwrap();
        assert_eq!(a, b);
        let c = trainer(Objective::Ddpm, 5).fit(&data(), |_, _| {}).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn flow_training_runs() {
        let mut t = trainer(Objective::Flow, 1);
        let losses = t.fit(&data(), |_, _| {}).unwrap();
        assert_eq!(losses.len(), 5);
        assert!(losses.iter().all(|l| l.is_finite()));
        assert_eq!(t.steps_taken(), 5);
    }

    #[test]
    fn rejects_bad_config() {
        let c = ModelConfig::micro();
        let p = init_params::<f32>(&c, 0).unwrap();
        let s = NoiseSchedule::new(&ScheduleConfig::default()).unwrap();
        let bad = TrainConfig {
            lr: -1.0,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(p, s, bad).is_err());
    }
}
