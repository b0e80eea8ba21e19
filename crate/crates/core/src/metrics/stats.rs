use std::cmp::Ordering;

use crate::error::{usage_err, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Probability that a random incoherent score exceeds a random coherent
/// one, ties counting one half. Exact pair counting.
pub fn separation_auroc(coherent: &[f64], incoherent: &[f64]) -> Result<f64> {
    if coherent.is_empty() || incoherent.is_empty() {
        return Err(usage_err!("AUROC needs two non-empty groups"));
    }
    let mut wins = 0.0;
    for &b in incoherent {
        for &a in coherent {
            wins += match b.partial_cmp(&a) {
                Some(Ordering::Greater) => 1.0,
                Some(Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    Ok(wins / (coherent.len() * incoherent.len()) as f64)
}

/// Outcome of a paired one-sided sign test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    /// Pairs where the treatment is strictly lower.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// Tests whether `treated` tends to be lower than `baseline`; tied pairs
/// are dropped.
pub fn sign_test(baseline: &[f64], treated: &[f64]) -> Result<SignTest> {
    if baseline.len() != treated.len() || baseline.is_empty() {
        return Err(usage_err!(
            "sign test needs equal non-empty samples, got {} and {}",
            baseline.len(),
            treated.len()
        ));
    }
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (b, t) in baseline.iter().zip(treated) {
        match t.partial_cmp(b) {
            Some(Ordering::Less) => wins += 1,
            Some(Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    })
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`, summed in log space.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0; // ln C(n, 0)
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (ln_c + ln_half_n).exp();
        }
    }
    total.min(1.0)
}
