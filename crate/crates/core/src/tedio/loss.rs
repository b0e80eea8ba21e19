use std::cmp::Ordering;

use crate::error::{usage_err, Error, Result};
use crate::tensor::{Element, Tensor};

/// Indices of the `k` largest scores, highest first; equal scores go to
/// the lower index.
pub fn top_k_indices<E: Element>(scores: &[E], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > scores.len() {
        return Err(usage_err!("k = {k} outside 1..={}", scores.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN variability score".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

/// Mean of the `k` largest scores. The selection is made on the current
/// values and then held fixed; gradients flow only into selected entries.
/// Returns the loss and the selected patch indices.
pub fn tedio_loss<E: Element>(scores: &Tensor<E>, k: usize) -> Result<(Tensor<E>, Vec<usize>)> {
    if scores.rank() != 1 {
        return Err(usage_err!("scores must be a vector, got {:?}", scores.shape()));
    }
    let picked = top_k_indices(scores.data(), k)?;
    let loss = scores.gather(&picked, &[k])?.mean()?;
    Ok((loss, picked))
}
