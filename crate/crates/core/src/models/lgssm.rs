//! One-dimensional linear Gaussian state-space model
//!
//! `x_1 ~ N(0, sx2)`, `x_t ~ N(x_{t-1}, sx2)`, `y_t ~ N(x_t, sy2)`,
//! with an exact Kalman/RTS oracle and the analytic smoothing proposal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::params::check_len;
use crate::ssm::{
    log_normal, ModelGradient, ParamLayout, Parameterized, Proposal, ProposalGradient,
    StateSpaceModel, Twist, LN_2PI,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgssmParams {
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
}

impl Default for LgssmParams {
    fn default() -> Self {
        LgssmParams {
            sigma_x2: 1.0,
            sigma_y2: 1.0,
            horizon: 10,
        }
    }
}

impl LgssmParams {
    pub fn new(sigma_x2: f64, sigma_y2: f64, horizon: usize) -> Result<Self> {
        let p = LgssmParams {
            sigma_x2,
            sigma_y2,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x2 > 0.0 && self.sigma_y2 > 0.0) {
            return Err(Error::InvalidArgument(
                "LGSSM variances must be positive".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("LGSSM horizon must be >= 1".into()));
        }
        Ok(())
    }
}

impl StateSpaceModel for LgssmParams {
    type State = f64;
    type Obs = f64;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn log_transition(&self, _t: usize, prev: Option<&f64>, x: &f64) -> f64 {
        log_normal(*x, prev.copied().unwrap_or(0.0), self.sigma_x2)
    }

    fn log_observation(&self, _t: usize, x: &f64, y: &f64) -> f64 {
        log_normal(*y, *x, self.sigma_y2)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: Option<&f64>, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        prev.copied().unwrap_or(0.0) + self.sigma_x2.sqrt() * z
    }

    fn sample_observation<R: Rng + ?Sized>(&self, _t: usize, x: &f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        x + self.sigma_y2.sqrt() * z
    }
}

/// Parameters are exposed as `log_sigma_x2`, `log_sigma_y2`.
impl Parameterized for LgssmParams {
    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
            .with("log_sigma_x2", &[1])
            .with("log_sigma_y2", &[1])
    }

    fn values(&self) -> Vec<f64> {
        vec![self.sigma_x2.ln(), self.sigma_y2.ln()]
    }

    fn set_values(&mut self, v: &[f64]) -> Result<()> {
        check_len("lgssm", 2, v.len())?;
        self.sigma_x2 = v[0].exp();
        self.sigma_y2 = v[1].exp();
        Ok(())
    }
}

impl ModelGradient for LgssmParams {
    fn accumulate_step_grad(
        &self,
        _t: usize,
        prev: Option<&f64>,
        x: &f64,
        y: &f64,
        scale: f64,
        out: &mut [f64],
    ) {
        let dx = x - prev.copied().unwrap_or(0.0);
        let dy = y - x;
        out[0] += scale * (-0.5 + 0.5 * dx * dx / self.sigma_x2);
        out[1] += scale * (-0.5 + 0.5 * dy * dy / self.sigma_y2);
    }
}

/// `grad_{log sx2, log sy2} sum_t log p(x_t, y_t | x_{t-1})`.
pub fn lgssm_theta_grads(params: &LgssmParams, xs: &[f64], ys: &[f64]) -> Result<[f64; 2]> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectory length {} != observation length {}",
            xs.len(),
            ys.len()
        )));
    }
    let mut g = [0.0; 2];
    for t in 0..xs.len() {
        let prev = t.checked_sub(1).map(|p| &xs[p]);
        params.accumulate_step_grad(t, prev, &xs[t], &ys[t], 1.0, &mut g);
    }
    Ok(g)
}

/// Exact posterior quantities from the Kalman filter and RTS smoother.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub log_z: f64,
    pub predicted_means: Vec<f64>,
    pub predicted_vars: Vec<f64>,
    pub filtered_means: Vec<f64>,
    pub filtered_vars: Vec<f64>,
    pub smoothed_means: Vec<f64>,
    pub smoothed_vars: Vec<f64>,
    /// `Cov(x_t, x_{t+1} | y_{1:T})`, length `T - 1`.
    pub smoothed_cross_covs: Vec<f64>,
}

pub fn kalman(params: &LgssmParams, ys: &[f64]) -> Result<OracleResult> {
    params.validate()?;
    if ys.is_empty() {
        return Err(Error::InvalidArgument("kalman needs at least one observation".into()));
    }
    let (sx2, sy2) = (params.sigma_x2, params.sigma_y2);
    let n = ys.len();
    let mut pm = Vec::with_capacity(n);
    let mut pv = Vec::with_capacity(n);
    let mut fm = Vec::with_capacity(n);
    let mut fv: Vec<f64> = Vec::with_capacity(n);
    let mut log_z = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        let (m_pred, v_pred) = if t == 0 {
            (0.0, sx2)
        } else {
            (fm[t - 1], fv[t - 1] + sx2)
        };
        let s = v_pred + sy2;
        log_z += log_normal(y, m_pred, s);
        let k = v_pred / s;
        pm.push(m_pred);
        pv.push(v_pred);
        fm.push(m_pred + k * (y - m_pred));
        fv.push((1.0 - k) * v_pred);
    }
    let mut sm = fm.clone();
    let mut sv = fv.clone();
    let mut cc = vec![0.0; n.saturating_sub(1)];
    for t in (0..n.saturating_sub(1)).rev() {
        let g = fv[t] / pv[t + 1];
        sm[t] = fm[t] + g * (sm[t + 1] - pm[t + 1]);
        sv[t] = fv[t] + g * g * (sv[t + 1] - pv[t + 1]);
        cc[t] = g * sv[t + 1];
    }
    Ok(OracleResult {
        log_z,
        predicted_means: pm,
        predicted_vars: pv,
        filtered_means: fm,
        filtered_vars: fv,
        smoothed_means: sm,
        smoothed_vars: sv,
        smoothed_cross_covs: cc,
    })
}

/// Draws `x_{1:T} ~ p(x_{1:T} | y_{1:T})` by forward filtering, backward sampling.
pub fn sample_posterior<R: Rng + ?Sized>(
    params: &LgssmParams,
    oracle: &OracleResult,
    rng: &mut R,
) -> Vec<f64> {
    let n = oracle.filtered_means.len();
    let mut xs = vec![0.0; n];
    let z: f64 = StandardNormal.sample(rng);
    xs[n - 1] = oracle.filtered_means[n - 1] + oracle.filtered_vars[n - 1].sqrt() * z;
    for t in (0..n - 1).rev() {
        let (m, v) = (oracle.filtered_means[t], oracle.filtered_vars[t]);
        let var = 1.0 / (1.0 / v + 1.0 / params.sigma_x2);
        let mean = var * (m / v + xs[t + 1] / params.sigma_x2);
        let z: f64 = StandardNormal.sample(rng);
        xs[t] = mean + var.sqrt() * z;
    }
    xs
}

/// Backward information filter: `p(y_{t+1:T} | x_t) ∝ exp(-prec_t x^2 / 2 + shift_t x)`
/// with `shift_t = sum_s coeffs[t][s] y_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadInfo {
    pub precision: Vec<f64>,
    /// `T x T`, row `t` nonzero only for `s > t`.
    pub coeffs: Vec<Vec<f64>>,
}

impl LookaheadInfo {
    pub fn new(params: &LgssmParams, horizon: usize) -> Self {
        let (sx2, sy2) = (params.sigma_x2, params.sigma_y2);
        let mut precision = vec![0.0; horizon];
        let mut coeffs = vec![vec![0.0; horizon]; horizon];
        for t in (0..horizon.saturating_sub(1)).rev() {
            let j_next = precision[t + 1] + 1.0 / sy2;
            let den = 1.0 + sx2 * j_next;
            precision[t] = j_next / den;
            let mut row = coeffs[t + 1].clone();
            row[t + 1] += 1.0 / sy2;
            for c in row.iter_mut() {
                *c /= den;
            }
            coeffs[t] = row;
        }
        LookaheadInfo { precision, coeffs }
    }

    pub fn shift(&self, t: usize, ys: &[f64]) -> f64 {
        self.coeffs[t].iter().zip(ys).map(|(c, y)| c * y).sum()
    }
}

/// The exact conditionals `p(x_t | x_{t-1}, y_{t:T})`.
#[derive(Debug, Clone)]
pub struct OptimalProposal {
    params: LgssmParams,
    info: LookaheadInfo,
    shifts: Vec<f64>,
    ys: Vec<f64>,
}

impl OptimalProposal {
    pub fn new(params: &LgssmParams, ys: &[f64]) -> Self {
        let info = LookaheadInfo::new(params, ys.len());
        let shifts = (0..ys.len()).map(|t| info.shift(t, ys)).collect();
        OptimalProposal {
            params: *params,
            info,
            shifts,
            ys: ys.to_vec(),
        }
    }

    /// Mean and variance of `p(x_t | x_{t-1}, y_{t:T})`.
    pub fn conditional(&self, t: usize, prev: Option<f64>) -> (f64, f64) {
        let (sx2, sy2) = (self.params.sigma_x2, self.params.sigma_y2);
        let prec = 1.0 / sx2 + 1.0 / sy2 + self.info.precision[t];
        let lin = prev.unwrap_or(0.0) / sx2 + self.ys[t] / sy2 + self.shifts[t];
        (lin / prec, 1.0 / prec)
    }
}

impl Proposal<LgssmParams> for OptimalProposal {
    fn sample<R: Rng + ?Sized>(
        &self,
        _model: &LgssmParams,
        t: usize,
        prev: Option<&f64>,
        _ys: &[f64],
        rng: &mut R,
    ) -> f64 {
        let (m, v) = self.conditional(t, prev.copied());
        let z: f64 = StandardNormal.sample(rng);
        m + v.sqrt() * z
    }

    fn log_density(&self, _model: &LgssmParams, t: usize, prev: Option<&f64>, x: &f64, _ys: &[f64]) -> f64 {
        let (m, v) = self.conditional(t, prev.copied());
        log_normal(*x, m, v)
    }
}

impl Parameterized for OptimalProposal {
    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
    }

    fn values(&self) -> Vec<f64> {
        Vec::new()
    }

    fn set_values(&mut self, values: &[f64]) -> Result<()> {
        check_len("optimal", 0, values.len())
    }
}

impl ProposalGradient<LgssmParams> for OptimalProposal {
    fn accumulate_log_density_grad(
        &self,
        _model: &LgssmParams,
        _t: usize,
        _prev: Option<&f64>,
        _x: &f64,
        _ys: &[f64],
        _scale: f64,
        _out: &mut [f64],
    ) {
    }
}

/// The exact lookahead `log p(y_{t+1:T} | x_t)`, normalising constant included.
///
/// Computed from the joint covariance of the future observations given
/// `x_t` (`sx2 * min(i, j) + sy2 * [i == j]`), independently of the
/// backward recursion in [`LookaheadInfo`]. Built for one fixed sequence;
/// the `ys` passed to [`Twist::log_twist`] are ignored.
#[derive(Debug, Clone)]
pub struct ExactLookaheadTwist {
    /// `(constant, linear, quadratic)` so that `log r = c + l x - q x^2 / 2`.
    terms: Vec<(f64, f64, f64)>,
}

impl ExactLookaheadTwist {
    pub fn new(params: &LgssmParams, ys: &[f64]) -> Self {
        let horizon = ys.len();
        let mut terms = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let k = horizon - 1 - t;
            if k == 0 {
                terms.push((0.0, 0.0, 0.0));
                continue;
            }
            let cov = DMatrix::from_fn(k, k, |i, j| {
                params.sigma_x2 * (i.min(j) + 1) as f64 + if i == j { params.sigma_y2 } else { 0.0 }
            });
            let chol = cov.cholesky().expect("lookahead covariance is positive definite");
            let y = DVector::from_iterator(k, ys[t + 1..].iter().copied());
            let ones = DVector::from_element(k, 1.0);
            let inv_y = chol.solve(&y);
            let inv_1 = chol.solve(&ones);
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let c = -0.5 * (k as f64 * LN_2PI + log_det + y.dot(&inv_y));
            terms.push((c, ones.dot(&inv_y), ones.dot(&inv_1)));
        }
        ExactLookaheadTwist { terms }
    }

    pub fn eval(&self, t: usize, x: f64) -> f64 {
        let (c, l, q) = self.terms[t];
        c + l * x - 0.5 * q * x * x
    }
}

impl Twist<LgssmParams> for ExactLookaheadTwist {
    fn log_twist(&self, t: usize, x: &f64, _ys: &[f64]) -> f64 {
        self.eval(t, *x)
    }
}

/// Mean-field Gaussian proposal `q(x_{1:T}) = prod_t N(x_t; mu_t, sigma_t^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldGaussian {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        check_len("log_var", mu.len(), log_var.len())?;
        Ok(MeanFieldGaussian { mu, log_var })
    }

    pub fn standard(horizon: usize) -> Self {
        MeanFieldGaussian {
            mu: vec![0.0; horizon],
            log_var: vec![0.0; horizon],
        }
    }

    /// Posterior marginals of the oracle.
    pub fn from_oracle(oracle: &OracleResult) -> Self {
        MeanFieldGaussian {
            mu: oracle.smoothed_means.clone(),
            log_var: oracle.smoothed_vars.iter().map(|v| v.ln()).collect(),
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.log_var.iter().map(|s| s.exp()).collect()
    }

    pub fn horizon(&self) -> usize {
        self.mu.len()
    }

    pub fn log_density_at(&self, t: usize, x: f64) -> f64 {
        log_normal(x, self.mu[t], self.log_var[t].exp())
    }

    /// `(d/dmu_t, d/dlog_var_t) log q_t(x)`.
    pub fn grad_at(&self, t: usize, x: f64) -> (f64, f64) {
        let var = self.log_var[t].exp();
        let d = x - self.mu[t];
        (d / var, -0.5 + 0.5 * d * d / var)
    }
}

impl Parameterized for MeanFieldGaussian {
    fn layout(&self) -> ParamLayout {
        let t = self.mu.len();
        ParamLayout::new().with("mu", &[t]).with("log_var", &[t])
    }

    fn values(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.log_var).copied().collect()
    }

    fn set_values(&mut self, v: &[f64]) -> Result<()> {
        let t = self.mu.len();
        check_len("mean-field proposal", 2 * t, v.len())?;
        self.mu.copy_from_slice(&v[..t]);
        self.log_var.copy_from_slice(&v[t..]);
        Ok(())
    }
}

impl<M: StateSpaceModel<State = f64>> Proposal<M> for MeanFieldGaussian {
    fn sample<R: Rng + ?Sized>(&self, _model: &M, t: usize, _prev: Option<&f64>, _ys: &[M::Obs], rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu[t] + (0.5 * self.log_var[t]).exp() * z
    }

    fn log_density(&self, _model: &M, t: usize, _prev: Option<&f64>, x: &f64, _ys: &[M::Obs]) -> f64 {
        self.log_density_at(t, *x)
    }
}

impl<M: StateSpaceModel<State = f64>> ProposalGradient<M> for MeanFieldGaussian {
    fn accumulate_log_density_grad(
        &self,
        _model: &M,
        t: usize,
        _prev: Option<&f64>,
        x: &f64,
        _ys: &[M::Obs],
        scale: f64,
        out: &mut [f64],
    ) {
        let (gm, gs) = self.grad_at(t, *x);
        let horizon = self.mu.len();
        out[t] += scale * gm;
        out[horizon + t] += scale * gs;
    }
}
