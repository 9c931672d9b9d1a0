//! Log-space helpers and categorical sampling.

use rand::Rng;

use crate::error::{Error, Result};

/// `ln Σ exp(x_i)`, `-inf` for an empty or all `-inf` slice.
pub fn ln_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalized probabilities from log weights (max-subtraction first).
pub fn normalize_ln(ln_w: &[f64]) -> Vec<f64> {
    let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![f64::NAN; ln_w.len()];
    }
    let w: Vec<f64> = ln_w.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Inverse-CDF draw from unnormalized log weights.
pub fn sample_ln<R: Rng + ?Sized>(ln_w: &[f64], rng: &mut R) -> Result<usize> {
    let p = normalize_ln(ln_w);
    if p.iter().any(|x| x.is_nan()) {
        return Err(Error::Numerical(format!("no finite weight among {} candidates", ln_w.len())));
    }
    Ok(sample_probs(&p, rng))
}

/// Inverse-CDF draw from probabilities summing to (about) one.
pub fn sample_probs<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            last = i;
            acc += x;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Linear-interpolated quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_gap() {
        let p = normalize_ln(&[9f64.ln() + 3.0, 3.0]);
        assert!((p[0] - 0.9).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-12);
        assert_eq!(ln_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((ln_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn neg_inf_never_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_ln(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], &mut rng).unwrap(), 1);
        }
        assert!(sample_ln(&[f64::NEG_INFINITY], &mut rng).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
    }
}
