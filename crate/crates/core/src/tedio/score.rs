//! Diagonal bands and their variability.

use super::TemporalAttention;
use crate::error::{dim_err, usage_err, Result};
use crate::tensor::{Element, Tensor};

fn square_side<E: Element>(map: &Tensor<E>) -> Result<usize> {
    match map.shape() {
        [a, b] if a == b => Ok(*a),
        other => Err(dim_err!("expected a square map, got {:?}", other)),
    }
}

/// Flat positions `(i, i + b)` of band `b` inside an `F×F` map, in order
/// of increasing row.
fn band_positions(frames: usize, b: isize) -> Result<Vec<usize>> {
    let off = b.unsigned_abs();
    if off >= frames {
        return Err(usage_err!("band {b} does not exist in a {frames}x{frames} map"));
    }
    Ok((0..frames - off)
        .map(|i| {
            let (row, col) = if b >= 0 { (i, i + off) } else { (i + off, i) };
            row * frames + col
        })
        .collect())
}

/// Entries of band `b` of an `F×F` map: `(i, i + b)` for every valid `i`,
/// length `F − |b|`.
pub fn extract_band<E: Element>(map: &Tensor<E>, b: isize) -> Result<Tensor<E>> {
    let f = square_side(map)?;
    let pos = band_positions(f, b)?;
    let n = pos.len();
    map.gather(&pos, &[n])
}

/// Sum over bands of squared successive differences along each band.
/// A band of length one contributes nothing.
pub fn variability_score<E: Element>(map: &Tensor<E>, bands: &[isize]) -> Result<Tensor<E>> {
    let f = square_side(map)?;
    let stacked = map.reshape(&[1, f, f])?;
    let scores = band_scores(&stacked, f, 1, bands)?;
    scores.reshape(&[])
}

/// Scores of every patch of a temporal attention tensor, `[P]`.
pub fn variability_scores<E: Element>(
    attn: &TemporalAttention<E>,
    bands: &[isize],
) -> Result<Tensor<E>> {
    band_scores(&attn.values, attn.frames, attn.patches, bands)
}

fn band_scores<E: Element>(
    values: &Tensor<E>,
    frames: usize,
    patches: usize,
    bands: &[isize],
) -> Result<Tensor<E>> {
    let f2 = frames * frames;
    let mut total: Option<Tensor<E>> = None;
    for &b in bands {
        let pos = band_positions(frames, b)?;
        let terms = pos.len() - 1;
        if terms == 0 {
            continue;
        }
        let mut later = Vec::with_capacity(patches * terms);
        let mut earlier = Vec::with_capacity(patches * terms);
        for p in 0..patches {
            for w in pos.windows(2) {
                earlier.push(p * f2 + w[0]);
                later.push(p * f2 + w[1]);
            }
        }
        let diff = values
            .gather(&later, &[patches, terms])?
            .sub(&values.gather(&earlier, &[patches, terms])?)?;
        let s = diff.square()?.sum_axis(1)?;
        total = Some(match total {
            Some(acc) => acc.add(&s)?,
            None => s,
        });
    }
    Ok(total.unwrap_or_else(|| Tensor::zeros(&[patches])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m3() -> Tensor<f64> {
        Tensor::from_f64(&[3, 3], &[0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.2, 0.7]).unwrap()
    }

    fn eye3() -> Tensor<f64> {
        Tensor::from_f64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn band_examples() {
        assert_eq!(extract_band(&eye3(), 0).unwrap().data(), &[1.0, 1.0, 1.0]);
        assert_eq!(extract_band(&eye3(), 1).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(extract_band(&m3(), -1).unwrap().data(), &[0.2, 0.2]);
        assert_eq!(extract_band(&m3(), 2).unwrap().data(), &[0.1]);
        assert!(extract_band(&m3(), 3).is_err());
        assert!(extract_band(&m3(), -3).is_err());
    }

    #[test]
    fn score_examples() {
        let uniform = Tensor::<f64>::full(&[4, 4], 0.25);
        assert_eq!(variability_score(&uniform, &[-1, 0, 1]).unwrap().item().unwrap(), 0.0);
        let s = variability_score(&m3(), &[-1, 0, 1]).unwrap().item().unwrap();
        assert!((s - 0.05).abs() < 1e-12, "{s}");
        let two = Tensor::<f64>::from_f64(&[2, 2], &[0.7311, 0.2689, 0.5, 0.5]).unwrap();
        let s = variability_score(&two, &[-1, 0, 1]).unwrap().item().unwrap();
        assert!((s - 0.0534).abs() < 1e-4, "{s}");
        assert!(variability_score(&two, &[2]).is_err());
    }

    #[test]
    fn non_square_is_rejected() {
        let x = Tensor::<f64>::zeros(&[2, 3]);
        assert!(extract_band(&x, 0).is_err());
    }
}
