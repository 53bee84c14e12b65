//! Log-normaliser bounds over particle counts and seeds.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::smc::{smc_sweep, SmcConfig};
use crate::ssm::{Proposal, RngStream, StateSpaceModel, Twist};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub sequence: usize,
    pub n_particles: usize,
    pub num_seeds: usize,
    pub mean_log_z: f64,
    pub se_log_z: f64,
    pub mean_log_z_per_step: f64,
    pub se_log_z_per_step: f64,
}

pub const BOUNDS_HEADER: &str =
    "sequence,n_particles,num_seeds,mean_log_z,se_log_z,mean_log_z_per_step,se_log_z_per_step";

/// Stream id of one sweep cell, so every `(sequence, N, seed)` draws from
/// its own stream regardless of evaluation order.
pub fn cell_stream(base_seed: u64, sequence: usize, n: usize, seed: usize) -> RngStream {
    let id = ((sequence as u64) << 40) ^ ((n as u64) << 20) ^ seed as u64;
    RngStream::new(base_seed, id)
}

/// Raw `log Z_hat` per `(N, seed)`, in `(N, seed)` order.
#[allow(clippy::too_many_arguments)]
pub fn bound_samples<M, P>(
    model: &M,
    ys: &[M::Obs],
    proposal: &P,
    twist: Option<&dyn Twist<M>>,
    base: &SmcConfig,
    ns: &[usize],
    num_seeds: usize,
    base_seed: u64,
    sequence: usize,
) -> Result<Vec<Vec<f64>>>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    ns.iter()
        .map(|&n| {
            let cfg = SmcConfig {
                num_particles: n,
                ..base.clone()
            };
            (0..num_seeds)
                .into_par_iter()
                .map(|s| {
                    let mut rng = cell_stream(base_seed, sequence, n, s);
                    smc_sweep(model, ys, proposal, twist, &cfg, &mut rng).map(|r| r.log_z_hat)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Mean and standard error of `log Z_hat` for each `N`.
#[allow(clippy::too_many_arguments)]
pub fn bound_sweep<M, P>(
    model: &M,
    ys: &[M::Obs],
    proposal: &P,
    twist: Option<&dyn Twist<M>>,
    base: &SmcConfig,
    ns: &[usize],
    num_seeds: usize,
    base_seed: u64,
    sequence: usize,
) -> Result<Vec<BoundRow>>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    let samples = bound_samples(model, ys, proposal, twist, base, ns, num_seeds, base_seed, sequence)?;
    let steps = ys.len().max(1) as f64;
    Ok(ns
        .iter()
        .zip(samples)
        .map(|(&n, xs)| {
            let (mean, se) = mean_se(&xs);
            BoundRow {
                sequence,
                n_particles: n,
                num_seeds,
                mean_log_z: mean,
                se_log_z: se,
                mean_log_z_per_step: mean / steps,
                se_log_z_per_step: se / steps,
            }
        })
        .collect())
}

/// Sample mean and standard error; the error is NaN for one sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_bounds_csv<W: Write>(rows: &[BoundRow], mut w: W) -> Result<()> {
    writeln!(w, "{BOUNDS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.sequence,
            r.n_particles,
            r.num_seeds,
            r.mean_log_z,
            r.se_log_z,
            r.mean_log_z_per_step,
            r.se_log_z_per_step
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lgssm::LgssmParams;
    use crate::ssm::Bootstrap;

    #[test]
    fn single_particle_bound_is_the_trajectory_weight() {
        let m = LgssmParams::new(1.0, 1.0, 3).unwrap();
        let ys = [0.2, -0.4, 1.0];
        let rows = bound_samples(&m, &ys, &Bootstrap, None, &SmcConfig::filtering(1), &[1], 3, 5, 0).unwrap();
        for (s, lz) in rows[0].iter().enumerate() {
            let mut rng = cell_stream(5, 0, 1, s);
            let r = smc_sweep(&m, &ys, &Bootstrap, None, &SmcConfig::filtering(1), &mut rng).unwrap();
            let direct: f64 = r.steps.iter().map(|st| st.log_incremental[0]).sum();
            assert!((lz - direct).abs() < 1e-12);
        }
    }
}
