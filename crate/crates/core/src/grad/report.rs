//! Empirical bias and variance of gradient estimators against a reference.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceRow {
    pub estimator: String,
    pub parameter: String,
    pub mean: f64,
    /// Sample variance across replications; NaN for a single replication.
    pub variance: f64,
    pub reference: f64,
    pub bias: f64,
    /// Standard error of the mean; NaN for a single replication.
    pub se: f64,
}

impl BiasVarianceRow {
    /// `|bias| / se`.
    pub fn z(&self) -> f64 {
        self.bias.abs() / self.se
    }
}

/// Runs every estimator `reps` times. Replication `r` of every estimator
/// draws from `RngStream::new(seed, r)`, so estimators see common random
/// numbers where their sampling paths coincide. Replications run in
/// parallel and are aggregated in index order.
pub fn gradient_bias_variance_report<F>(
    estimators: &[(&str, F)],
    labels: &[String],
    reference: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<BiasVarianceRow>>
where
    F: Fn(&mut RngStream) -> Result<Vec<f64>> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    if labels.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            name: "reference".into(),
            expected: labels.len(),
            found: reference.len(),
        });
    }
    let mut rows = Vec::new();
    for (name, est) in estimators {
        let draws: Vec<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| est(&mut RngStream::new(seed, r as u64)))
            .collect::<Result<_>>()?;
        for (k, label) in labels.iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let variance = if reps > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                f64::NAN
            };
            rows.push(BiasVarianceRow {
                estimator: name.to_string(),
                parameter: label.clone(),
                mean,
                variance,
                reference: reference[k],
                bias: mean - reference[k],
                se: (variance / n).sqrt(),
            });
        }
    }
    Ok(rows)
}

pub fn write_report_csv<W: Write>(rows: &[BiasVarianceRow], mut out: W) -> Result<()> {
    writeln!(out, "estimator,parameter,mean,variance,reference,bias,se")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.estimator, r.parameter, r.mean, r.variance, r.reference, r.bias, r.se
        )?;
    }
    Ok(())
}
