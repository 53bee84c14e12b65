//! Log-space weight arithmetic.

use crate::error::{Error, Result};

/// `log(sum(exp(xs)))` with max-shift stabilisation. Returns `-inf` when
/// every entry is `-inf` (or the slice is empty).
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs
        .iter()
        .filter(|x| !x.is_nan())
        .map(|&x| (x - max).exp())
        .sum();
    max + sum.ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    logsumexp(xs) - (xs.len() as f64).ln()
}

/// A normalised set of importance weights together with their raw log values.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub log_sum: f64,
}

impl LogWeights {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn uniform(n: usize) -> Self {
        LogWeights {
            raw: vec![0.0; n],
            normalized: vec![1.0 / n as f64; n],
            log_sum: (n as f64).ln(),
        }
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(self)
    }
}

/// Normalises log-weights without exponentiating the unshifted values.
///
/// NaN entries are treated as zero weight. Fails with
/// [`Error::DegenerateWeights`] when nothing finite remains.
pub fn normalize_log_weights(raw: &[f64]) -> Result<LogWeights> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("empty log-weight vector".into()));
    }
    let clean: Vec<f64> = raw
        .iter()
        .map(|&x| if x.is_nan() { f64::NEG_INFINITY } else { x })
        .collect();
    let max = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    // ratios of shifted values keep full relative precision
    let shifted: Vec<f64> = clean.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let log_sum = max + total.ln();
    let normalized = shifted.into_iter().map(|e| e / total).collect();
    Ok(LogWeights {
        raw: clean,
        normalized,
        log_sum,
    })
}

/// `1 / sum(w_i^2)` over the normalised weights.
pub fn effective_sample_size(w: &LogWeights) -> f64 {
    let s: f64 = w.normalized.iter().map(|p| p * p).sum();
    1.0 / s
}
