//! The outer training loop: twist updates by density-ratio estimation,
//! then proposal (and optionally model) updates from weighted particles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smc::{smc_sweep, ResampleScheme, ResampleTrigger, SmcConfig, TargetKind};
use crate::ssm::{ModelGradient, ProposalGradient, Twist};
use crate::twist::{DreTwist, TwistTrainConfig, TwistTrainer};

use super::adam::{AdamHyper, AdamState, LrSchedule};
use super::{particle_gradients, snis_rws_gradients_and_bound, EstimatorKind, GradEstimate};

/// When the twist is trained relative to proposal updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Schedule {
    /// `twist_steps` twist updates before every round of proposal updates.
    Alternating,
    /// `steps` twist updates once up front, none afterwards.
    TwistFirst { steps: usize },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Alternating
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub estimator: EstimatorKind,
    pub num_particles: usize,
    pub resample_trigger: ResampleTrigger,
    pub resample_scheme: ResampleScheme,
    pub outer_rounds: usize,
    pub twist_steps: usize,
    pub proposal_steps: usize,
    pub schedule: Schedule,
    pub proposal_lr: LrSchedule,
    /// `None` freezes the model.
    pub model_lr: Option<LrSchedule>,
    /// Required for NAS-X.
    pub twist: Option<TwistTrainConfig>,
    /// Record sweep metrics every this many proposal steps (0 disables).
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(estimator: EstimatorKind, num_particles: usize) -> Self {
        TrainConfig {
            estimator,
            num_particles,
            resample_trigger: ResampleTrigger::default(),
            resample_scheme: ResampleScheme::default(),
            outer_rounds: 1,
            twist_steps: 100,
            proposal_steps: 100,
            schedule: Schedule::default(),
            proposal_lr: LrSchedule::constant(1e-3),
            model_lr: None,
            twist: None,
            log_every: 1,
        }
    }

    fn smc(&self) -> SmcConfig {
        let base = match self.estimator {
            EstimatorKind::Nasx => SmcConfig::twisted(self.num_particles),
            _ => SmcConfig::filtering(self.num_particles),
        };
        base.with_trigger(self.resample_trigger).with_scheme(self.resample_scheme)
    }
}

/// One `(step, metric, value)` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(step: usize, metric: impl Into<String>, value: f64) -> Self {
        MetricRow {
            step,
            metric: metric.into(),
            value,
        }
    }
}

struct Snapshot {
    theta: Vec<f64>,
    phis: Vec<Vec<f64>>,
    psi: Option<Vec<f64>>,
}

/// Trains per-sequence proposals (and the model when `cfg.model_lr` is set)
/// on `data`. Proposal step `k` uses sequence `k % data.len()`.
///
/// `extra` is called at every logged step and may add oracle comparisons.
/// On divergence the parameters are restored to the state at the start of
/// the failing round and [`Error::Diverged`] is returned; rows recorded so
/// far stay in `metrics`.
#[allow(clippy::too_many_arguments)]
pub fn train_nasx<M, P, Tw, R, F>(
    model: &mut M,
    proposals: &mut [P],
    mut twist: Option<&mut Tw>,
    data: &[Vec<M::Obs>],
    cfg: &TrainConfig,
    rng: &mut R,
    metrics: &mut Vec<MetricRow>,
    mut extra: F,
) -> Result<()>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
    Tw: DreTwist<M>,
    R: Rng + ?Sized,
    F: FnMut(usize, &M, &[P]) -> Vec<(String, f64)>,
{
    if proposals.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} proposals for {} sequences",
            proposals.len(),
            data.len()
        )));
    }
    if cfg.outer_rounds == 0 {
        return Ok(());
    }
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let nasx = cfg.estimator == EstimatorKind::Nasx;
    let mut trainer = match (nasx, &cfg.twist, &twist) {
        (true, Some(tc), Some(tw)) => Some(TwistTrainer::new(tc.clone(), tw.layout().total_len())),
        (true, _, _) => {
            return Err(Error::Config(
                "nasx training needs both a twist and a twist section".into(),
            ))
        }
        _ => None,
    };
    let smc = cfg.smc();
    let theta_layout = model.layout();
    let mut theta_adam = cfg
        .model_lr
        .as_ref()
        .map(|lr| AdamState::new(AdamHyper::with_lr(lr.base), theta_layout.total_len()));
    let mut phi_adams: Vec<AdamState> = proposals
        .iter()
        .map(|p| AdamState::new(AdamHyper::with_lr(cfg.proposal_lr.base), p.layout().total_len()))
        .collect();

    let mut step = 0usize;
    let mut twist_losses: Vec<(usize, f64)> = Vec::new();

    if let (Schedule::TwistFirst { steps }, Some(tr), Some(tw)) = (&cfg.schedule, trainer.as_mut(), twist.as_deref_mut()) {
        twist_losses.clear();
        tr.run(&*model, tw, *steps, rng, |s, _, l| twist_losses.push((s, l)))?;
        push_twist_losses(metrics, &twist_losses, cfg.log_every);
    }

    for round in 0..cfg.outer_rounds {
        let snap = Snapshot {
            theta: model.values(),
            phis: proposals.iter().map(|p| p.values()).collect(),
            psi: twist.as_deref().map(|t| t.values()),
        };
        let outcome = run_round(
            model,
            proposals,
            twist.as_deref_mut(),
            trainer.as_mut(),
            data,
            cfg,
            &smc,
            theta_adam.as_mut(),
            &mut phi_adams,
            &mut step,
            rng,
            metrics,
            &mut extra,
        );
        if let Err(e) = outcome {
            let diverging = matches!(
                e,
                Error::NonFiniteLoss { .. }
                    | Error::NonFiniteGradient { .. }
                    | Error::DegenerateSweep { .. }
                    | Error::DegenerateWeights
            );
            if !diverging {
                return Err(e);
            }
            model.set_values(&snap.theta)?;
            for (p, v) in proposals.iter_mut().zip(&snap.phis) {
                p.set_values(v)?;
            }
            if let (Some(tw), Some(v)) = (twist.as_deref_mut(), &snap.psi) {
                tw.set_values(v)?;
            }
            return Err(Error::Diverged {
                step,
                reason: format!("round {round}: {e}"),
            });
        }
    }
    Ok(())
}

fn push_twist_losses(metrics: &mut Vec<MetricRow>, losses: &[(usize, f64)], every: usize) {
    if every == 0 {
        return;
    }
    for &(s, l) in losses {
        if s % every == 0 {
            metrics.push(MetricRow::new(s, "twist_loss", l));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_round<M, P, Tw, R, F>(
    model: &mut M,
    proposals: &mut [P],
    twist: Option<&mut Tw>,
    trainer: Option<&mut TwistTrainer>,
    data: &[Vec<M::Obs>],
    cfg: &TrainConfig,
    smc: &SmcConfig,
    mut theta_adam: Option<&mut AdamState>,
    phi_adams: &mut [AdamState],
    step: &mut usize,
    rng: &mut R,
    metrics: &mut Vec<MetricRow>,
    extra: &mut F,
) -> Result<()>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
    Tw: DreTwist<M>,
    R: Rng + ?Sized,
    F: FnMut(usize, &M, &[P]) -> Vec<(String, f64)>,
{
    let twist: Option<&Tw> = match (twist, trainer) {
        (Some(tw), Some(tr)) => {
            if cfg.schedule == Schedule::Alternating {
                let mut losses = Vec::new();
                tr.run(&*model, tw, cfg.twist_steps, rng, |s, _, l| losses.push((s, l)))?;
                push_twist_losses(metrics, &losses, cfg.log_every);
            }
            Some(&*tw)
        }
        (tw, _) => tw.map(|t| &*t),
    };
    let theta_layout = model.layout();
    for _ in 0..cfg.proposal_steps {
        let k = *step % data.len();
        let ys = &data[k];
        let (g, log_z, resamples): (GradEstimate, f64, Option<usize>) = match cfg.estimator {
            EstimatorKind::Rws => {
                let (g, b) = snis_rws_gradients_and_bound(&*model, &proposals[k], ys, cfg.num_particles, rng)?;
                (g, b, None)
            }
            kind => {
                let tw = twist.map(|t| t as &dyn Twist<M>);
                let tw = if smc.target_kind == TargetKind::SmoothingTwisted { tw } else { None };
                let res = smc_sweep(&*model, ys, &proposals[k], tw, smc, rng)?;
                let g = particle_gradients(kind, &res, &*model, &proposals[k], ys)?;
                (g, res.log_z_hat, Some(res.resample_count))
            }
        };
        let lr_phi = cfg.proposal_lr.at(*step);
        let mut phi = proposals[k].values();
        phi_adams[k].step_with_lr(&mut phi, &g.d_phi.values, &g.d_phi.layout, lr_phi)?;
        proposals[k].set_values(&phi)?;
        if let (Some(adam), Some(lr)) = (theta_adam.as_deref_mut(), cfg.model_lr.as_ref()) {
            // ascend the likelihood
            let neg: Vec<f64> = g.d_theta.values.iter().map(|v| -v).collect();
            let mut theta = model.values();
            adam.step_with_lr(&mut theta, &neg, &theta_layout, lr.at(*step))?;
            model.set_values(&theta)?;
        }
        if cfg.log_every > 0 && *step % cfg.log_every == 0 {
            metrics.push(MetricRow::new(*step, "log_z_hat", log_z));
            if let Some(r) = resamples {
                metrics.push(MetricRow::new(*step, "resample_count", r as f64));
            }
            metrics.push(MetricRow::new(*step, "grad_norm_phi", g.d_phi.norm()));
            if cfg.model_lr.is_some() {
                metrics.push(MetricRow::new(*step, "grad_norm_theta", g.d_theta.norm()));
            }
            for (name, v) in extra(*step, &*model, &*proposals) {
                metrics.push(MetricRow::new(*step, name, v));
            }
        }
        *step += 1;
    }
    Ok(())
}
