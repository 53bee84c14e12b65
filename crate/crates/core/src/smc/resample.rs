//! Resampling: Walker/Vose alias tables and systematic resampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::LogWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleScheme {
    #[default]
    MultinomialAlias,
    Systematic,
}

/// Alias table for O(1) categorical draws, built in O(K).
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Builds from non-negative weights (need not be normalised).
    pub fn new(weights: &[f64]) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("alias table over zero categories".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::DegenerateWeights);
        }
        let scale = k as f64 / total;
        let mut prob: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let mut alias: Vec<usize> = (0..k).collect();
        let mut small = Vec::with_capacity(k);
        let mut large = Vec::with_capacity(k);
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s] = l;
            prob[l] = (prob[l] + prob[s]) - 1.0;
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
            alias[i] = i;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Systematic resampling: one uniform offset, `n` evenly spaced pointers
/// swept left to right through the cumulative weights.
pub fn systematic<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let u0: f64 = rng.random::<f64>() / n as f64;
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = probs[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 * step;
        while u >= cum && j + 1 < probs.len() {
            j += 1;
            cum += probs[j];
        }
        out.push(j);
    }
    out
}

/// Draws `n` ancestor indices (0-based) from the normalised weights.
pub fn resample_indices<R: Rng + ?Sized>(
    w: &LogWeights,
    n: usize,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("resampling from zero categories".into()));
    }
    match scheme {
        ResampleScheme::MultinomialAlias => {
            let table = AliasTable::new(&w.normalized)?;
            Ok((0..n).map(|_| table.sample(rng)).collect())
        }
        ResampleScheme::Systematic => Ok(systematic(&w.normalized, n, rng)),
    }
}
