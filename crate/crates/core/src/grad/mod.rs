//! Reweighted-wake-sleep gradient estimators.
//!
//! Every estimator returns `d_theta`, an estimate of `grad_theta log p(y)`
//! (ascend it), and `d_phi`, an estimate of the inclusive-KL gradient
//! `-E_post[grad_phi log q]` (descend it).

pub mod adam;
pub mod report;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smc::{SmcResult, TargetKind};
use crate::ssm::{normalize_log_weights, ModelGradient, ParamVec, ProposalGradient};

pub use adam::{adam_step, AdamHyper, AdamState, LrSchedule};
pub use report::{gradient_bias_variance_report, BiasVarianceRow};
pub use train::{train_nasx, MetricRow, Schedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Nasx,
    Nasmc,
    Rws,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Nasx => "nasx",
            EstimatorKind::Nasmc => "nasmc",
            EstimatorKind::Rws => "rws",
        }
    }

    /// The sweep target a particle estimator must be fed.
    pub fn required_target(self) -> Option<TargetKind> {
        match self {
            EstimatorKind::Nasx => Some(TargetKind::SmoothingTwisted),
            EstimatorKind::Nasmc => Some(TargetKind::Filtering),
            EstimatorKind::Rws => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Step-`t` ensemble weights at each step.
    TimeT,
    /// One weight per whole trajectory.
    Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub d_theta: ParamVec,
    pub d_phi: ParamVec,
    pub kind: EstimatorKind,
    pub num_particles: usize,
    pub weighting: Weighting,
}

impl GradEstimate {
    pub fn is_finite(&self) -> bool {
        self.d_theta.values.iter().chain(&self.d_phi.values).all(|v| v.is_finite())
    }
}

/// NAS-X: time-`t` weights of a twisted sweep.
pub fn nasx_gradients<M, P>(
    result: &SmcResult<M::State>,
    model: &M,
    proposal: &P,
    ys: &[M::Obs],
) -> Result<GradEstimate>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
{
    particle_gradients(EstimatorKind::Nasx, result, model, proposal, ys)
}

/// NASMC: time-`t` weights of a filtering sweep.
pub fn nasmc_gradients<M, P>(
    result: &SmcResult<M::State>,
    model: &M,
    proposal: &P,
    ys: &[M::Obs],
) -> Result<GradEstimate>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
{
    particle_gradients(EstimatorKind::Nasmc, result, model, proposal, ys)
}

/// Dispatches on `kind`; `Rws` is not a particle estimator and is rejected.
pub fn particle_gradients<M, P>(
    kind: EstimatorKind,
    result: &SmcResult<M::State>,
    model: &M,
    proposal: &P,
    ys: &[M::Obs],
) -> Result<GradEstimate>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
{
    let expected = kind.required_target().ok_or_else(|| {
        Error::InvalidArgument("rws gradients are computed from whole trajectories, not a sweep".into())
    })?;
    if result.target_kind != expected {
        return Err(Error::EstimatorMismatch {
            estimator: kind.as_str(),
            expected: expected.as_str(),
            found: result.target_kind.as_str(),
        });
    }
    let mut d_theta = ParamVec::zeros(model.layout());
    let mut d_phi = ParamVec::zeros(proposal.layout());
    for (t, step) in result.steps.iter().enumerate() {
        for (i, x) in step.particles.iter().enumerate() {
            let w = step.weights.normalized[i];
            if w == 0.0 {
                continue;
            }
            let prev = result.parent_state(t, i);
            model.accumulate_step_grad(t, prev, x, &ys[t], w, &mut d_theta.values);
            proposal.accumulate_log_density_grad(model, t, prev, x, ys, -w, &mut d_phi.values);
        }
    }
    Ok(GradEstimate {
        d_theta,
        d_phi,
        kind,
        num_particles: result.num_particles(),
        weighting: Weighting::TimeT,
    })
}

/// Draws `n` whole trajectories from `proposal` and returns them with their
/// log importance weights `log p(x, y) - log q(x)`.
pub fn sample_weighted_trajectories<M, P, R>(
    model: &M,
    proposal: &P,
    ys: &[M::Obs],
    n: usize,
    rng: &mut R,
) -> (Vec<Vec<M::State>>, Vec<f64>)
where
    M: ModelGradient,
    P: ProposalGradient<M>,
    R: Rng + ?Sized,
{
    let mut trajs = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for _ in 0..n {
        let mut xs: Vec<M::State> = Vec::with_capacity(ys.len());
        let mut lw = 0.0;
        for t in 0..ys.len() {
            let x = proposal.sample(model, t, xs.last(), ys, rng);
            lw += model.log_step(t, xs.last(), &x, &ys[t]) - proposal.log_density(model, t, xs.last(), &x, ys);
            xs.push(x);
        }
        trajs.push(xs);
        log_w.push(lw);
    }
    (trajs, log_w)
}

/// Self-normalised importance sampling over whole trajectories.
pub fn snis_rws_gradients<M, P, R>(
    model: &M,
    proposal: &P,
    ys: &[M::Obs],
    n: usize,
    rng: &mut R,
) -> Result<GradEstimate>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
    R: Rng + ?Sized,
{
    snis_rws_gradients_and_bound(model, proposal, ys, n, rng).map(|(g, _)| g)
}

/// As [`snis_rws_gradients`], also returning the importance-sampling bound
/// `log (1/n) sum_i w_i`.
pub fn snis_rws_gradients_and_bound<M, P, R>(
    model: &M,
    proposal: &P,
    ys: &[M::Obs],
    n: usize,
    rng: &mut R,
) -> Result<(GradEstimate, f64)>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidArgument("snis needs at least one sample".into()));
    }
    let (trajs, log_w) = sample_weighted_trajectories(model, proposal, ys, n, rng);
    let w = normalize_log_weights(&log_w)?;
    let mut d_theta = ParamVec::zeros(model.layout());
    let mut d_phi = ParamVec::zeros(proposal.layout());
    for (xs, &wi) in trajs.iter().zip(&w.normalized) {
        if wi == 0.0 {
            continue;
        }
        for t in 0..ys.len() {
            let prev = t.checked_sub(1).map(|p| &xs[p]);
            model.accumulate_step_grad(t, prev, &xs[t], &ys[t], wi, &mut d_theta.values);
            proposal.accumulate_log_density_grad(model, t, prev, &xs[t], ys, -wi, &mut d_phi.values);
        }
    }
    let bound = w.log_sum - (n as f64).ln();
    let g = GradEstimate {
        d_theta,
        d_phi,
        kind: EstimatorKind::Rws,
        num_particles: n,
        weighting: Weighting::Trajectory,
    };
    Ok((g, bound))
}
