//! Finite-difference suites over the operators, the model and the
//! refinement loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{init_params, predict, DiTParams, ModelConfig};
use crate::tedio::{tedio_objective, TedioConfig};
use crate::tensor::gradcheck::check_gradient;
use crate::tensor::{Element, Tensor};

/// Step, relative-error floor and tolerance for one precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub step: f64,
    pub floor: f64,
    pub max_rel_err: f64,
}

impl Tolerance {
    pub fn for_dtype<E: Element>() -> Self {
        if E::BYTES == 8 {
            Self {
                step: 1e-4,
                floor: 1e-6,
                max_rel_err: 1e-4,
            }
        } else {
            Self {
                step: 1e-2,
                floor: 1e-2,
                max_rel_err: 5e-2,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub cases: usize,
    pub worst_rel_err: f64,
    pub passed: bool,
}

/// Micro model with a random output head, so predictions depend on the
/// input (the default head is zero).
pub fn micro_params<E: Element>(seed: u64) -> Result<DiTParams<E>> {
    let mut p = init_params::<E>(&ModelConfig::micro(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    p.head.weight = Tensor::randn(p.head.weight.shape(), 0.5, &mut rng);
    Ok(p)
}

/// Gradient of the refinement loss with respect to the latent on the
/// micro model, capture at block 2.
pub fn tedio_case<E: Element>(seed: u64, tol: &Tolerance) -> Result<f64> {
    let p = micro_params::<E>(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Tensor::<E>::randn(&p.config.latent_shape(), 1.0, &mut rng);
    let cfg = TedioConfig {
        block: 2,
        k: 2,
        ..TedioConfig::default()
    };
    let f = |x: &Tensor<E>| Ok(tedio_objective(&p, x, 1, 600.0, &cfg)?.loss);
    Ok(check_gradient(f, &z, tol.step, tol.floor)?.max_rel_err)
}

fn model_case<E: Element>(seed: u64, tol: &Tolerance) -> Result<f64> {
    let p = micro_params::<E>(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let z = Tensor::<E>::randn(&p.config.latent_shape(), 1.0, &mut rng);
    let target = Tensor::<E>::randn(&p.config.latent_shape(), 1.0, &mut rng);
    let f = |x: &Tensor<E>| predict(&p, x, 0, 300.0)?.sub(&target)?.square()?.mean();
    Ok(check_gradient(f, &z, tol.step, tol.floor)?.max_rel_err)
}

fn ops_cases<E: Element>(seed: u64, tol: &Tolerance) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::<E>::randn(&[3, 4], 1.0, &mut rng);
    let w = Tensor::<E>::randn(&[4, 5], 1.0, &mut rng);
    let g = Tensor::<E>::randn(&[4], 1.0, &mut rng);
    let b = Tensor::<E>::randn(&[4], 1.0, &mut rng);
    let weights = Tensor::<E>::randn(&[3, 4], 1.0, &mut rng);
    let cases: Vec<Box<dyn Fn(&Tensor<E>) -> Result<Tensor<E>>>> = vec![
        Box::new(|x| x.matmul(&w)?.gelu().sum()),
        Box::new(|x| x.softmax(1)?.mul(&weights)?.sum()),
        Box::new(|x| x.layer_norm(&g, &b, 1e-5)?.mul(&weights)?.sum()),
        Box::new(|x| x.silu().permute(&[1, 0])?.reshape(&[12])?.square()?.mean()),
        Box::new(|x| x.gather(&[0, 5, 5, 11], &[2, 2])?.sum_axis(1)?.square()?.sum()),
        Box::new(|x| x.mul(x)?.sub(&weights)?.scale(0.5).add_scalar(1.0).sum()),
    ];
    cases
        .iter()
        .map(|f| Ok(check_gradient(f, &x, tol.step, tol.floor)?.max_rel_err))
        .collect()
}

/// Runs the `ops`, `model` and `tedio` suites over `seeds` seeds each.
pub fn run_suites<E: Element>(seeds: u64, tol: &Tolerance) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let mut push = |suite: &str, errs: Vec<f64>| {
        let worst = errs.iter().copied().fold(0.0, f64::max);
        out.push(SuiteResult {
            suite: suite.into(),
            cases: errs.len(),
            worst_rel_err: worst,
            passed: errs.iter().all(|e| *e < tol.max_rel_err),
        });
    };
    let mut ops = Vec::new();
    for s in 0..seeds {
        ops.extend(ops_cases::<E>(s, tol)?);
    }
    push("ops", ops);
    push("model", (0..seeds).map(|s| model_case::<E>(s, tol)).collect::<Result<_>>()?);
    push("tedio", (0..seeds).map(|s| tedio_case::<E>(s, tol)).collect::<Result<_>>()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_suites_pass() {
        let tol = Tolerance::for_dtype::<f64>();
        for r in run_suites::<f64>(2, &tol).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }
}
