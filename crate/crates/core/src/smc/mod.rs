//! Sequential Monte Carlo sweeps over filtering or twisted (smoothing)
//! targets.
//!
//! The target at step `t` is `gamma_t(x_{1:t}) = p(x_{1:t}, y_{1:t}) r(y_{t+1:T}, x_t)`
//! for twisted sweeps and `p(x_{1:t}, y_{1:t})` for filtering sweeps. The final
//! step never carries a twist, so `gamma_T` is proportional to the joint and
//! the normaliser estimate targets `p(y_{1:T})` in both cases.

pub mod resample;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::{logsumexp, normalize_log_weights, LogWeights, Proposal, StateSpaceModel, Twist};

pub use resample::{resample_indices, systematic, AliasTable, ResampleScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleTrigger {
    Always,
    /// Resample when `ESS < fraction * N`.
    EssFraction(f64),
}

impl Default for ResampleTrigger {
    fn default() -> Self {
        ResampleTrigger::EssFraction(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Filtering,
    SmoothingTwisted,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Filtering => "filtering",
            TargetKind::SmoothingTwisted => "smoothing-twisted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub num_particles: usize,
    #[serde(default)]
    pub resample_scheme: ResampleScheme,
    #[serde(default)]
    pub resample_trigger: ResampleTrigger,
    pub target_kind: TargetKind,
}

impl SmcConfig {
    pub fn filtering(num_particles: usize) -> Self {
        SmcConfig {
            num_particles,
            resample_scheme: ResampleScheme::default(),
            resample_trigger: ResampleTrigger::default(),
            target_kind: TargetKind::Filtering,
        }
    }

    pub fn twisted(num_particles: usize) -> Self {
        SmcConfig {
            target_kind: TargetKind::SmoothingTwisted,
            ..Self::filtering(num_particles)
        }
    }

    pub fn with_trigger(mut self, trigger: ResampleTrigger) -> Self {
        self.resample_trigger = trigger;
        self
    }

    pub fn with_scheme(mut self, scheme: ResampleScheme) -> Self {
        self.resample_scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_particles == 0 {
            return Err(Error::InvalidArgument("num_particles must be >= 1".into()));
        }
        if let ResampleTrigger::EssFraction(tau) = self.resample_trigger {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "ess fraction must lie in (0, 1], got {tau}"
                )));
            }
        }
        Ok(())
    }

    fn should_resample(&self, w: &LogWeights) -> bool {
        match self.resample_trigger {
            ResampleTrigger::Always => true,
            ResampleTrigger::EssFraction(tau) => w.ess() < tau * self.num_particles as f64,
        }
    }
}

/// One timestep of the particle system.
#[derive(Debug, Clone)]
pub struct SmcStep<S> {
    pub particles: Vec<S>,
    /// Index into the previous step's particles that each particle extends.
    /// Empty at `t = 0`.
    pub parents: Vec<usize>,
    /// `log alpha_t` per particle.
    pub log_incremental: Vec<f64>,
    /// Accumulated weights at `t` before any resampling.
    pub weights: LogWeights,
    /// Whether the system was resampled after weighting at this step.
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct SmcResult<S> {
    pub steps: Vec<SmcStep<S>>,
    pub log_z_hat: f64,
    pub resample_count: usize,
    pub target_kind: TargetKind,
}

impl<S> SmcResult<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_particles(&self) -> usize {
        self.steps.first().map_or(0, |s| s.particles.len())
    }

    /// Walks the ancestry of particle `i` at step `t` back to step 0.
    pub fn lineage(&self, t: usize, i: usize) -> Vec<usize> {
        let mut idx = vec![0; t + 1];
        let mut cur = i;
        for s in (0..=t).rev() {
            idx[s] = cur;
            if s > 0 {
                cur = self.steps[s].parents[cur];
            }
        }
        idx
    }

    /// Particle `i` of step `t` together with its ancestors, oldest first.
    pub fn trajectory(&self, t: usize, i: usize) -> Vec<&S> {
        self.lineage(t, i)
            .into_iter()
            .enumerate()
            .map(|(s, k)| &self.steps[s].particles[k])
            .collect()
    }

    /// The predecessor state of particle `i` at step `t`.
    pub fn parent_state(&self, t: usize, i: usize) -> Option<&S> {
        (t > 0).then(|| &self.steps[t - 1].particles[self.steps[t].parents[i]])
    }

    /// Recomputes the normaliser estimate from the stored increments:
    /// `sum_t [ logsumexp(w_{t-1} + log alpha_t) - logsumexp(w_{t-1}) ]`
    /// where `w_{t-1}` is reset to zero after a resampling step.
    pub fn recompute_log_z(&self) -> f64 {
        let n = self.num_particles();
        let mut carried = vec![0.0; n];
        let mut log_z = 0.0;
        for step in &self.steps {
            let prev: Vec<f64> = step.parents.iter().map(|&p| carried[p]).collect();
            let prev = if prev.is_empty() { vec![0.0; n] } else { prev };
            let acc: Vec<f64> = prev.iter().zip(&step.log_incremental).map(|(a, b)| a + b).collect();
            log_z += logsumexp(&acc) - logsumexp(&prev);
            carried = if step.resampled { vec![0.0; n] } else { acc };
        }
        log_z
    }
}

/// Runs one SMC sweep over `ys`.
///
/// The incremental weight is
/// `log alpha_t = log gamma_t(x_{1:t}) - log gamma_{t-1}(x_{1:t-1}) - log q(x_t | x_{t-1})`
/// with `gamma_0 = 1`. Weighting happens before resampling; the final step
/// is never resampled so its weights remain usable.
pub fn smc_sweep<M, P, R>(
    model: &M,
    ys: &[M::Obs],
    proposal: &P,
    twist: Option<&dyn Twist<M>>,
    cfg: &SmcConfig,
    rng: &mut R,
) -> Result<SmcResult<M::State>>
where
    M: StateSpaceModel,
    P: Proposal<M>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    match (cfg.target_kind, twist.is_some()) {
        (TargetKind::Filtering, true) => {
            return Err(Error::InvalidArgument(
                "filtering sweep was given a twist".into(),
            ))
        }
        (TargetKind::SmoothingTwisted, false) => {
            return Err(Error::InvalidArgument(
                "smoothing-twisted sweep requires a twist".into(),
            ))
        }
        _ => {}
    }
    let n = cfg.num_particles;
    let horizon = ys.len();
    let mut steps: Vec<SmcStep<M::State>> = Vec::with_capacity(horizon);
    // accumulated log-weights and twist values carried into the next step,
    // indexed by the particles of the previous step
    let mut carried_w = vec![0.0; n];
    let mut carried_twist = vec![0.0; n];
    let mut ancestors: Vec<usize> = Vec::new();
    let mut log_z = 0.0;
    let mut resample_count = 0;

    for t in 0..horizon {
        let twisted_here = t + 1 < horizon;
        let mut particles = Vec::with_capacity(n);
        let mut log_inc = Vec::with_capacity(n);
        let mut prev_w = Vec::with_capacity(n);
        let mut twist_vals = Vec::with_capacity(n);
        for i in 0..n {
            let (prev, prev_twist, w) = if t == 0 {
                (None, 0.0, 0.0)
            } else {
                let a = ancestors[i];
                (Some(&steps[t - 1].particles[a]), carried_twist[a], carried_w[a])
            };
            let x = proposal.sample(model, t, prev, ys, rng);
            let log_q = proposal.log_density(model, t, prev, &x, ys);
            let r = match twist {
                Some(tw) if twisted_here => tw.log_twist(t, &x, ys),
                _ => 0.0,
            };
            let mut a = model.log_step(t, prev, &x, &ys[t]) + r - prev_twist - log_q;
            if a.is_nan() {
                a = f64::NEG_INFINITY;
            }
            particles.push(x);
            log_inc.push(a);
            prev_w.push(w);
            twist_vals.push(r);
        }
        let acc: Vec<f64> = prev_w.iter().zip(&log_inc).map(|(w, a)| w + a).collect();
        let weights = match normalize_log_weights(&acc) {
            Ok(w) => w,
            Err(Error::DegenerateWeights) => return Err(Error::DegenerateSweep { t }),
            Err(e) => return Err(e),
        };
        log_z += weights.log_sum - logsumexp(&prev_w);

        let resample = t + 1 < horizon && cfg.should_resample(&weights);
        let parents = if t == 0 { Vec::new() } else { ancestors.clone() };
        if resample {
            ancestors = resample_indices(&weights, n, cfg.resample_scheme, rng)?;
            carried_w = vec![0.0; n];
            resample_count += 1;
        } else {
            ancestors = (0..n).collect();
            carried_w = weights.raw.clone();
        }
        carried_twist = twist_vals;
        steps.push(SmcStep {
            particles,
            parents,
            log_incremental: log_inc,
            weights,
            resampled: resample,
        });
    }

    Ok(SmcResult {
        steps,
        log_z_hat: log_z,
        resample_count,
        target_kind: cfg.target_kind,
    })
}

/// Which particle approximation of `p(x_{1:t} | y_{1:T})` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationMode {
    /// Step-`t` particles with step-`t` weights.
    TimeT,
    /// Final particles with final weights, truncated to their first `t` steps.
    TimeFinal,
}

/// Estimates `E[f(t, x_{1:t})]` at every step. `f` receives the trajectory
/// prefix oldest first.
pub fn posterior_expectation<S, F>(
    result: &SmcResult<S>,
    f: F,
    mode: ExpectationMode,
) -> Vec<Vec<f64>>
where
    F: Fn(usize, &[&S]) -> Vec<f64>,
{
    let horizon = result.len();
    let n = result.num_particles();
    let mut out = Vec::with_capacity(horizon);
    match mode {
        ExpectationMode::TimeT => {
            for t in 0..horizon {
                let w = &result.steps[t].weights.normalized;
                let mut acc: Vec<f64> = Vec::new();
                for i in 0..n {
                    if w[i] == 0.0 {
                        continue;
                    }
                    let v = f(t, &result.trajectory(t, i));
                    add_scaled(&mut acc, &v, w[i]);
                }
                out.push(acc);
            }
        }
        ExpectationMode::TimeFinal => {
            let last = horizon - 1;
            let w = &result.steps[last].weights.normalized;
            let lineages: Vec<Vec<usize>> = (0..n).map(|i| result.lineage(last, i)).collect();
            for t in 0..horizon {
                let mut acc: Vec<f64> = Vec::new();
                for i in 0..n {
                    if w[i] == 0.0 {
                        continue;
                    }
                    let prefix: Vec<&S> = (0..=t)
                        .map(|s| &result.steps[s].particles[lineages[i][s]])
                        .collect();
                    add_scaled(&mut acc, &f(t, &prefix), w[i]);
                }
                out.push(acc);
            }
        }
    }
    out
}

fn add_scaled(acc: &mut Vec<f64>, v: &[f64], w: f64) {
    if acc.is_empty() {
        acc.resize(v.len(), 0.0);
    }
    for (a, b) in acc.iter_mut().zip(v) {
        *a += w * b;
    }
}
