//! Central finite differences, the project-wide gradient oracle.

use super::{Element, Tape, Tensor};
use crate::error::Result;

/// Gradient of `f` at `x` by central differences with the given step.
///
/// Each coordinate costs two evaluations of `f`; nothing here touches the
/// gradient tape.
pub fn finite_diff_gradient<E: Element>(
    f: impl Fn(&Tensor<E>) -> Result<f64>,
    x: &Tensor<E>,
    step: f64,
) -> Result<Tensor<E>> {
    let base = x.to_vec();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = E::from_f64(base[i].to_f64() + step);
        let mut minus = base.clone();
        minus[i] = E::from_f64(base[i].to_f64() - step);
        let fp = f(&Tensor::new(x.shape(), plus)?)?;
        let fm = f(&Tensor::new(x.shape(), minus)?)?;
        grad.push(E::from_f64((fp - fm) / (2.0 * step)));
    }
    Tensor::new(x.shape(), grad)
}

/// Reverse-mode gradient of `f` at `x`, with `f` building its graph on a
/// fresh tape.
pub fn tape_gradient<E: Element>(
    f: impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &Tensor<E>,
) -> Result<Tensor<E>> {
    let tape = Tape::<E>::new()?;
    let xw = tape.watch(x);
    let loss = f(&xw)?;
    let grads = tape.backward(&loss)?;
    Ok(grads.get(&xw).expect("watched leaf has a gradient"))
}

/// Largest per-coordinate relative error `|a-b| / max(|a|, |b|, floor)`.
///
/// The floor keeps coordinates whose true gradient is (numerically) zero
/// from dominating through round-off.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Finite differences against the tape for one function and point.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_err: f64,
}

pub fn check_gradient<E: Element>(
    f: impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &Tensor<E>,
    step: f64,
    floor: f64,
) -> Result<GradCheck> {
    let analytic = tape_gradient(&f, x)?.to_f64_vec();
    let numeric = finite_diff_gradient(|v| Ok(f(v)?.item()?.to_f64()), x, step)?.to_f64_vec();
    let err = max_rel_err(&analytic, &numeric, floor);
    Ok(GradCheck {
        analytic,
        numeric,
        max_rel_err: err,
    })
}
