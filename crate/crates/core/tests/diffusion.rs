use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tedio_core::diffusion::{sample, NoiseSchedule, Objective, ScheduleConfig, TrainConfig, Trainer};
use tedio_core::experiment::checks::micro_params;
use tedio_core::model::{init_params, ModelConfig};
use tedio_core::Tensor;

fn schedule(objective: Objective) -> NoiseSchedule {
    NoiseSchedule::new(&ScheduleConfig {
        objective,
        ..ScheduleConfig::default()
    })
    .unwrap()
}

fn variance(t: &Tensor<f64>) -> f64 {
    let d = t.data();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (d.len() - 1) as f64
}

#[test]
fn corrupted_variance_matches_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 10_000;
    let z0 = Tensor::<f64>::randn(&[n], 0.5, &mut rng);
    let eps = Tensor::<f64>::randn(&[n], 1.0, &mut rng);
    let v0 = variance(&z0);
    for objective in [Objective::Ddpm, Objective::Flow] {
        let s = schedule(objective);
        for pos in [1, s.train_positions / 4, s.train_positions / 2, s.train_positions] {
            let (a, sigma) = s.coefficients(pos).unwrap();
            let z = s.corrupt(&z0, &eps, pos).unwrap();
            let want = a * a * v0 + sigma * sigma;
            let got = variance(&z);
            assert!((got - want).abs() < 0.05 * want, "{objective:?} pos {pos}: {got} vs {want}");
        }
    }
}

#[test]
fn zero_head_starts_at_unit_noise_loss() {
    let c = ModelConfig::toy();
    let params = init_params::<f32>(&c, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch: Vec<_> = (0..4)
        .map(|i| (Tensor::<f32>::randn(&c.latent_shape(), 0.5, &mut rng), i))
        .collect();
    let mut trainer = Trainer::new(params, schedule(Objective::Ddpm), TrainConfig::default()).unwrap();
    let loss = trainer.step(&batch).unwrap();
    assert!((loss - 1.0).abs() < 0.1, "first loss {loss}");
}

#[test]
fn fixed_batch_loss_decreases() {
    let c = ModelConfig::micro();
    let params = init_params::<f32>(&c, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<_> = (0..2)
        .map(|i| (Tensor::<f32>::randn(&c.latent_shape(), 0.5, &mut rng), i))
        .collect();
    let cfg = TrainConfig {
        lr: 1e-3,
        ..TrainConfig::default()
    };
    for objective in [Objective::Ddpm, Objective::Flow] {
        let mut trainer = Trainer::new(params.clone(), schedule(objective), cfg.clone()).unwrap();
        let losses: Vec<f64> = (0..200).map(|_| trainer.step(&batch).unwrap()).collect();
        let head = losses[..40].iter().sum::<f64>() / 40.0;
        let tail = losses[160..].iter().sum::<f64>() / 40.0;
        assert!(tail < head, "{objective:?}: {head} -> {tail}");
    }
}

#[test]
fn samples_stay_finite() {
    let params = micro_params::<f32>(7).unwrap();
    for objective in [Objective::Ddpm, Objective::Flow] {
        let s = schedule(objective);
        for seed in 0..100 {
            let out = sample(&params, &s, (seed % 2) as usize, seed, None).unwrap();
            assert!(out.z0.all_finite(), "{objective:?} seed {seed}");
        }
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let params = micro_params::<f32>(8).unwrap();
    let s = schedule(Objective::Flow);
    let a = sample(&params, &s, 1, 42, None).unwrap();
    let b = sample(&params, &s, 1, 42, None).unwrap();
    let c = sample(&params, &s, 1, 43, None).unwrap();
    assert!(a.z0.bit_eq(&b.z0));
    assert!(!a.z0.bit_eq(&c.z0));
}
