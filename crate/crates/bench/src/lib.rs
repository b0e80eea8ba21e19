//! Criterion benchmarks for the toy model live in `benches/`; this crate
//! only shares their fixtures.

use tedio_core::diffusion::{initial_latent, NoiseSchedule, ScheduleConfig};
use tedio_core::model::{init_params, DiTParams, ModelConfig};
use tedio_core::Tensor;

/// Toy-config parameters with a non-zero output head, a schedule and a
/// starting latent.
pub fn fixture() -> (DiTParams<f32>, NoiseSchedule, Tensor<f32>) {
    let mut params = init_params::<f32>(&ModelConfig::toy(), 0).expect("toy config is valid");
    params.head.weight = params.head.weight.map(|_| 0.01);
    let schedule = NoiseSchedule::new(&ScheduleConfig::default()).expect("default schedule");
    let z = initial_latent(&params, 0);
    (params, schedule, z)
}
