//! Stochastic squid-axon Hodgkin-Huxley model.
//!
//! Units: mV, ms, uF/cm^2, mS/cm^2, uA/cm^2. The external current is a
//! current density. Each latent step applies one Strang-split integration
//! step followed by Gaussian voltage noise and logit-normal gate noise; a
//! noisy voltage is observed every `steps_per_obs` latent steps.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::{log_normal, logit, sigmoid, StateSpaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HhParams {
    pub c_m: f64,
    pub g_na: f64,
    pub g_k: f64,
    pub g_leak: f64,
    pub e_na: f64,
    pub e_k: f64,
    pub e_leak: f64,
    pub var_v: f64,
    pub var_m: f64,
    pub var_h: f64,
    pub var_n: f64,
    pub var_y: f64,
    /// Corruption variance of simulated observations; `var_y` when unset.
    pub var_y_data: Option<f64>,
    pub dt: f64,
    pub steps_per_obs: usize,
}

impl Default for HhParams {
    fn default() -> Self {
        HhParams {
            c_m: 1.0,
            g_na: 120.0,
            g_k: 36.0,
            g_leak: 0.3,
            e_na: 50.0,
            e_k: -77.0,
            e_leak: -54.4,
            var_v: 0.1,
            var_m: 0.01,
            var_h: 0.01,
            var_n: 0.01,
            var_y: 4.0,
            var_y_data: None,
            dt: 0.1,
            steps_per_obs: 10,
        }
    }
}

impl HhParams {
    pub fn validate(&self) -> Result<()> {
        let vars = [self.var_v, self.var_m, self.var_h, self.var_n, self.var_y, self.var_y_data.unwrap_or(self.var_y)];
        if vars.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("HH variances must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.c_m > 0.0) {
            return Err(Error::InvalidArgument("HH dt and c_m must be positive".into()));
        }
        if self.steps_per_obs == 0 {
            return Err(Error::InvalidArgument("steps_per_obs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhState {
    pub v: f64,
    pub m: f64,
    pub h: f64,
    pub n: f64,
}

impl HhState {
    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.m.is_finite() && self.h.is_finite() && self.n.is_finite()
    }
}

/// `(e^x - 1) / x`, equal to 1 at 0.
pub fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub alpha_m: f64,
    pub beta_m: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
}

pub fn hh_rates(v: f64) -> Rates {
    Rates {
        alpha_m: 1.0 / exprel(-4.0 - v / 10.0),
        beta_m: 4.0 * ((-65.0 - v) / 18.0).exp(),
        alpha_h: 0.07 * ((-65.0 - v) / 20.0).exp(),
        beta_h: 1.0 / (1.0 + ((-35.0 - v) / 10.0).exp()),
        alpha_n: 0.1 / exprel(-5.5 - v / 10.0),
        beta_n: 0.125 * ((-65.0 - v) / 80.0).exp(),
    }
}

fn relax(g: f64, alpha: f64, beta: f64, tau: f64) -> f64 {
    let k = alpha + beta;
    let inf = alpha / k;
    inf + (g - inf) * (-k * tau).exp()
}

fn gate_half_step(s: &mut HhState, tau: f64) {
    let r = hh_rates(s.v);
    s.m = relax(s.m, r.alpha_m, r.beta_m, tau);
    s.h = relax(s.h, r.alpha_h, r.beta_h, tau);
    s.n = relax(s.n, r.alpha_n, r.beta_n, tau);
}

/// `dv/dt = a - b v` with the gates frozen.
fn voltage_coeffs(s: &HhState, i_ext: f64, p: &HhParams) -> (f64, f64) {
    let g_na = p.g_na * s.m.powi(3) * s.h;
    let g_k = p.g_k * s.n.powi(4);
    let b = (g_na + g_k + p.g_leak) / p.c_m;
    let a = (i_ext + g_na * p.e_na + g_k * p.e_k + p.g_leak * p.e_leak) / p.c_m;
    (a, b)
}

/// Gate half-step, exact linear voltage step, gate half-step.
pub fn strang_step(s: &HhState, dt: f64, i_ext: f64, p: &HhParams) -> HhState {
    let mut out = *s;
    gate_half_step(&mut out, 0.5 * dt);
    let (a, b) = voltage_coeffs(&out, i_ext, p);
    let v_inf = a / b;
    out.v = v_inf + (out.v - v_inf) * (-b * dt).exp();
    gate_half_step(&mut out, 0.5 * dt);
    out
}

/// Right-hand side of the deterministic ODE.
pub fn vector_field(s: &HhState, i_ext: f64, p: &HhParams) -> HhState {
    let (a, b) = voltage_coeffs(s, i_ext, p);
    let r = hh_rates(s.v);
    HhState {
        v: a - b * s.v,
        m: r.alpha_m * (1.0 - s.m) - r.beta_m * s.m,
        h: r.alpha_h * (1.0 - s.h) - r.beta_h * s.h,
        n: r.alpha_n * (1.0 - s.n) - r.beta_n * s.n,
    }
}

/// Gates at their steady-state values for voltage `v`.
pub fn steady_gates(v: f64) -> HhState {
    let r = hh_rates(v);
    HhState {
        v,
        m: r.alpha_m / (r.alpha_m + r.beta_m),
        h: r.alpha_h / (r.alpha_h + r.beta_h),
        n: r.alpha_n / (r.alpha_n + r.beta_n),
    }
}

/// Fixed point of the deterministic system under constant current,
/// searched by bisection on `[-90, -40]` mV.
pub fn fixed_point(i_ext: f64, p: &HhParams) -> HhState {
    let f = |v: f64| vector_field(&steady_gates(v), i_ext, p).v;
    let (mut lo, mut hi) = (-90.0, -40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo).signum() == f(mid).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    steady_gates(0.5 * (lo + hi))
}

/// Log-density of `g` under a logit-normal with logit-mean `mu`.
pub fn logit_normal_log_density(g: f64, mu: f64, var: f64) -> f64 {
    if !(g > 0.0 && g < 1.0) {
        return f64::NEG_INFINITY;
    }
    log_normal(logit(g), mu, var) - (g * (1.0 - g)).ln()
}

/// `log p(next | s)` for one noisy step.
pub fn hh_log_transition(s: &HhState, next: &HhState, i_ext: f64, p: &HhParams) -> f64 {
    let det = strang_step(s, p.dt, i_ext, p);
    log_normal(next.v, det.v, p.var_v)
        + logit_normal_log_density(next.m, logit(det.m), p.var_m)
        + logit_normal_log_density(next.h, logit(det.h), p.var_h)
        + logit_normal_log_density(next.n, logit(det.n), p.var_n)
}

/// One noisy step and its log transition density.
pub fn hh_prob_step<R: Rng + ?Sized>(s: &HhState, p: &HhParams, i_ext: f64, rng: &mut R) -> (HhState, f64) {
    let det = strang_step(s, p.dt, i_ext, p);
    let mut e = [0.0f64; 4];
    for v in e.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    let noisy = |g: f64, var: f64, e: f64| sigmoid(logit(g) + var.sqrt() * e);
    let next = HhState {
        v: det.v + p.var_v.sqrt() * e[0],
        m: noisy(det.m, p.var_m, e[1]),
        h: noisy(det.h, p.var_h, e[2]),
        n: noisy(det.n, p.var_n, e[3]),
    };
    let lp = hh_log_transition(s, &next, i_ext, p);
    (next, lp)
}

/// Piecewise-constant current: the value of the last breakpoint at or
/// before `t`, zero before the first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stimulus {
    pub points: Vec<(f64, f64)>,
}

impl Stimulus {
    pub fn zero() -> Self {
        Stimulus { points: Vec::new() }
    }

    pub fn constant(amp: f64) -> Self {
        Stimulus {
            points: vec![(0.0, amp)],
        }
    }

    /// `amp` on `[onset, offset)`.
    pub fn pulse(onset: f64, offset: f64, amp: f64) -> Self {
        Stimulus {
            points: vec![(onset, amp), (offset, 0.0)],
        }
    }

    pub fn current_at(&self, t: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(s, _)| *s <= t)
            .last()
            .map_or(0.0, |(_, a)| *a)
    }

    /// Reads `time_ms,current` rows; a non-numeric first line is a header.
    pub fn from_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (a, b) = (cols.next(), cols.next());
            let parsed = match (a.map(str::parse::<f64>), b.map(str::parse::<f64>)) {
                (Some(Ok(t)), Some(Ok(c))) => (t, c),
                _ if lineno == 0 => continue,
                _ => {
                    return Err(Error::Config(format!(
                        "stimulus line {}: expected `time_ms,current`",
                        lineno + 1
                    )))
                }
            };
            points.push(parsed);
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Config("stimulus times must be non-decreasing".into()));
        }
        Ok(Stimulus { points })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_ms,current")?;
        for (t, c) in &self.points {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    }
}

/// Deterministic trajectory at every step, initial state included.
pub fn integrate(init: &HhState, stim: &Stimulus, dt: f64, t_ms: f64, p: &HhParams) -> Result<Vec<HhState>> {
    let steps = (t_ms / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(*init);
    let mut s = *init;
    for k in 0..steps {
        s = strang_step(&s, dt, stim.current_at(k as f64 * dt), p);
        if !s.is_finite() {
            return Err(Error::NonFiniteState { step: k });
        }
        out.push(s);
    }
    Ok(out)
}

/// Upward 0 mV crossings, ignoring crossings within `refractory_ms` of the
/// previous counted one.
pub fn spike_times(times: &[f64], v: &[f64], refractory_ms: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for k in 1..v.len() {
        if v[k - 1] < 0.0 && v[k] >= 0.0 {
            let t = times[k];
            if out.last().is_none_or(|last| t - last >= refractory_ms) {
                out.push(t);
            }
        }
    }
    out
}

/// The stochastic model as a state-space model over latent steps.
///
/// Step `k` advances from step `k - 1` (from `init` at `k = 0`) under the
/// current at time `k * dt`, and carries an observation when
/// `(k + 1) % steps_per_obs == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HhModel {
    pub params: HhParams,
    pub stimulus: Stimulus,
    pub init: HhState,
    pub num_steps: usize,
}

impl HhModel {
    pub fn new(params: HhParams, stimulus: Stimulus, t_ms: f64) -> Result<Self> {
        params.validate()?;
        let num_steps = (t_ms / params.dt).round() as usize;
        Ok(HhModel {
            init: fixed_point(0.0, &params),
            params,
            stimulus,
            num_steps,
        })
    }

    pub fn current(&self, k: usize) -> f64 {
        self.stimulus.current_at(k as f64 * self.params.dt)
    }

    pub fn observed(&self, k: usize) -> bool {
        (k + 1) % self.params.steps_per_obs == 0
    }
}

impl StateSpaceModel for HhModel {
    type State = HhState;
    type Obs = Option<f64>;

    fn horizon(&self) -> usize {
        self.num_steps
    }

    fn log_transition(&self, t: usize, prev: Option<&HhState>, x: &HhState) -> f64 {
        hh_log_transition(prev.unwrap_or(&self.init), x, self.current(t), &self.params)
    }

    fn log_observation(&self, _t: usize, x: &HhState, y: &Option<f64>) -> f64 {
        y.map_or(0.0, |y| log_normal(y, x.v, self.params.var_y))
    }

    fn sample_transition<R: Rng + ?Sized>(&self, t: usize, prev: Option<&HhState>, rng: &mut R) -> HhState {
        hh_prob_step(prev.unwrap_or(&self.init), &self.params, self.current(t), rng).0
    }

    fn sample_observation<R: Rng + ?Sized>(&self, t: usize, x: &HhState, rng: &mut R) -> Option<f64> {
        self.observed(t).then(|| {
            let e: f64 = StandardNormal.sample(rng);
            x.v + self.params.var_y.sqrt() * e
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<HhState>,
    pub obs: Vec<Option<f64>>,
}

impl Trace {
    pub fn observations(&self) -> Vec<f64> {
        self.obs.iter().flatten().copied().collect()
    }

    /// One row per latent step; `y_obs` is empty between observations.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_ms,v_true,y_obs,m,h,n")?;
        for ((t, s), y) in self.times.iter().zip(&self.states).zip(&self.obs) {
            let y = y.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{t},{},{y},{},{},{}", s.v, s.m, s.h, s.n)?;
        }
        Ok(())
    }
}

/// Samples a noisy trace of `t_ms` milliseconds from the resting state,
/// corrupting observations with `var_y_data` when it is set.
pub fn simulate_trace<R: Rng + ?Sized>(params: &HhParams, stim: &Stimulus, t_ms: f64, rng: &mut R) -> Result<Trace> {
    let mut gen = params.clone();
    if let Some(v) = params.var_y_data {
        gen.var_y = v;
    }
    let model = HhModel::new(gen, stim.clone(), t_ms)?;
    let mut states = Vec::with_capacity(model.num_steps);
    let mut obs = Vec::with_capacity(model.num_steps);
    let mut times = Vec::with_capacity(model.num_steps);
    for k in 0..model.num_steps {
        let x = model.sample_transition(k, states.last(), rng);
        if !x.is_finite() {
            return Err(Error::NonFiniteState { step: k });
        }
        obs.push(model.sample_observation(k, &x, rng));
        times.push((k + 1) as f64 * params.dt);
        states.push(x);
    }
    Ok(Trace { times, states, obs })
}
