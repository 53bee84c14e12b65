//! Switching linear dynamical system with a 2-D continuous state.
//!
//! ```text
//! z_1 ~ Uniform(K)               z_t | x_{t-1} ~ softmax_i(R_i . x_{t-1} + r_i)
//! x_1 ~ N(0, Q_{z_1})            x_t = A_{z_t} x_{t-1} + b_{z_t} + N(0, Q_{z_t})
//! y_t = C x_t + d + N(0, S)
//! ```
//!
//! The learnable model parameters are `b` and `r`. With `R = 0` the model
//! is conditionally linear-Gaussian given `z_{1:T}` and the posterior is
//! available by enumerating every discrete path.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::params::check_len;
use crate::ssm::{
    logsumexp, ModelGradient, ParamLayout, Parameterized, Proposal, ProposalGradient,
    StateSpaceModel, Twist, LN_2PI,
};
use crate::twist::DreTwist;

/// Plain-data description of an SLDS, as read from fixtures and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SldsSpec {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub a: Vec<[[f64; 2]; 2]>,
    pub b: Vec<[f64; 2]>,
    pub q: Vec<[[f64; 2]; 2]>,
    /// Recurrent switching weights `R_k`.
    pub r_weights: Vec<[f64; 2]>,
    /// Switching biases `r_k`.
    pub r_bias: Vec<f64>,
    /// Emission rows, `D x 2`.
    pub c: Vec<[f64; 2]>,
    pub d: Vec<f64>,
    /// Observation covariance, `D x D`.
    pub s: Vec<Vec<f64>>,
}

impl SldsSpec {
    /// A `K`-regime system whose regimes rotate at different speeds and
    /// drift in different directions, observed through a `D x 2` map.
    pub fn example(k: usize, dim_y: usize, horizon: usize) -> Self {
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        for i in 0..k {
            let theta = 0.15 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
            let rho = 0.9;
            a.push([
                [rho * theta.cos(), -rho * theta.sin()],
                [rho * theta.sin(), rho * theta.cos()],
            ]);
            let phi = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            b.push([0.8 * phi.cos(), 0.8 * phi.sin()]);
        }
        let c = (0..dim_y)
            .map(|j| {
                let phi = std::f64::consts::PI * j as f64 / dim_y as f64;
                [phi.cos(), phi.sin()]
            })
            .collect();
        let s = (0..dim_y)
            .map(|i| (0..dim_y).map(|j| if i == j { 0.2 } else { 0.0 }).collect())
            .collect();
        SldsSpec {
            horizon,
            a,
            b,
            q: vec![[[0.1, 0.0], [0.0, 0.1]]; k],
            r_weights: vec![[0.0, 0.0]; k],
            r_bias: vec![0.0; k],
            c,
            d: vec![0.0; dim_y],
            s,
        }
    }

    pub fn num_regimes(&self) -> usize {
        self.a.len()
    }

    pub fn dim_y(&self) -> usize {
        self.c.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SldsState {
    pub z: usize,
    pub x: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
struct Gauss2 {
    chol: Matrix2<f64>,
    inv: Matrix2<f64>,
    log_det: f64,
}

impl Gauss2 {
    fn new(m: &[[f64; 2]; 2], name: &str) -> Result<Self> {
        let m = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument(format!("{name} is not positive definite")))?;
        let l = chol.l();
        Ok(Gauss2 {
            inv: chol.inverse(),
            log_det: 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln()),
            chol: l,
        })
    }

    fn log_density(&self, d: Vector2<f64>) -> f64 {
        -0.5 * (2.0 * LN_2PI + self.log_det + d.dot(&(self.inv * d)))
    }
}

/// A validated SLDS with cached factorisations.
#[derive(Debug, Clone, PartialEq)]
pub struct Slds {
    spec: SldsSpec,
    q: Vec<Gauss2>,
    a: Vec<Matrix2<f64>>,
    c: DMatrix<f64>,
    s_mat: DMatrix<f64>,
    s_chol: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    s_log_det: f64,
}

impl Slds {
    pub fn new(spec: SldsSpec) -> Result<Self> {
        let k = spec.num_regimes();
        let dy = spec.dim_y();
        if k == 0 || dy == 0 || spec.horizon == 0 {
            return Err(Error::InvalidArgument("SLDS needs K, D, T >= 1".into()));
        }
        check_len("b", k, spec.b.len())?;
        check_len("q", k, spec.q.len())?;
        check_len("r_weights", k, spec.r_weights.len())?;
        check_len("r_bias", k, spec.r_bias.len())?;
        check_len("d", dy, spec.d.len())?;
        check_len("s", dy, spec.s.len())?;
        for row in &spec.s {
            check_len("s row", dy, row.len())?;
        }
        let q = spec
            .q
            .iter()
            .enumerate()
            .map(|(i, m)| Gauss2::new(m, &format!("q[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let a = spec
            .a
            .iter()
            .map(|m| Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]))
            .collect();
        let c = DMatrix::from_fn(dy, 2, |i, j| spec.c[i][j]);
        let s_mat = DMatrix::from_fn(dy, dy, |i, j| spec.s[i][j]);
        let chol = s_mat
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("s is not positive definite".into()))?;
        let s_chol = chol.l();
        let s_log_det = 2.0 * s_chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Slds {
            q,
            a,
            c,
            s_inv: chol.inverse(),
            s_mat,
            s_chol,
            s_log_det,
            spec,
        })
    }

    pub fn spec(&self) -> &SldsSpec {
        &self.spec
    }

    pub fn num_regimes(&self) -> usize {
        self.spec.num_regimes()
    }

    pub fn dim_y(&self) -> usize {
        self.spec.dim_y()
    }

    pub fn is_recurrent(&self) -> bool {
        self.spec.r_weights.iter().any(|w| w[0] != 0.0 || w[1] != 0.0)
    }

    /// `log p(z_t = . | x_{t-1})`; uniform at `t = 0`.
    pub fn log_switch_probs(&self, prev: Option<&SldsState>) -> Vec<f64> {
        let k = self.num_regimes();
        match prev {
            None => vec![-(k as f64).ln(); k],
            Some(p) => {
                let logits: Vec<f64> = (0..k)
                    .map(|i| {
                        let w = self.spec.r_weights[i];
                        w[0] * p.x[0] + w[1] * p.x[1] + self.spec.r_bias[i]
                    })
                    .collect();
                let lse = logsumexp(&logits);
                logits.into_iter().map(|l| l - lse).collect()
            }
        }
    }

    fn mean_x(&self, z: usize, prev: Option<&SldsState>) -> Vector2<f64> {
        match prev {
            None => Vector2::zeros(),
            Some(p) => {
                let b = self.spec.b[z];
                self.a[z] * Vector2::new(p.x[0], p.x[1]) + Vector2::new(b[0], b[1])
            }
        }
    }

    fn emission_mean(&self, x: &[f64; 2]) -> Vec<f64> {
        (0..self.dim_y())
            .map(|i| self.spec.c[i][0] * x[0] + self.spec.c[i][1] * x[1] + self.spec.d[i])
            .collect()
    }
}

impl StateSpaceModel for Slds {
    type State = SldsState;
    type Obs = Vec<f64>;

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn log_transition(&self, _t: usize, prev: Option<&SldsState>, x: &SldsState) -> f64 {
        let lz = self.log_switch_probs(prev)[x.z];
        let d = Vector2::new(x.x[0], x.x[1]) - self.mean_x(x.z, prev);
        lz + self.q[x.z].log_density(d)
    }

    fn log_observation(&self, _t: usize, x: &SldsState, y: &Vec<f64>) -> f64 {
        let mean = self.emission_mean(&x.x);
        let r = DVector::from_iterator(y.len(), y.iter().zip(&mean).map(|(a, b)| a - b));
        let quad = r.dot(&(&self.s_inv * &r));
        -0.5 * (y.len() as f64 * LN_2PI + self.s_log_det + quad)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: Option<&SldsState>, rng: &mut R) -> SldsState {
        let probs: Vec<f64> = self.log_switch_probs(prev).iter().map(|l| l.exp()).collect();
        let z = sample_categorical(&probs, rng);
        let e = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let x = self.mean_x(z, prev) + self.q[z].chol * e;
        SldsState { z, x: [x[0], x[1]] }
    }

    fn sample_observation<R: Rng + ?Sized>(&self, _t: usize, x: &SldsState, rng: &mut R) -> Vec<f64> {
        let dy = self.dim_y();
        let e = DVector::from_fn(dy, |_, _| StandardNormal.sample(rng));
        let noise = &self.s_chol * e;
        self.emission_mean(&x.x).iter().zip(noise.iter()).map(|(m, n)| m + n).collect()
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `b` (K x 2) then `r` (K).
impl Parameterized for Slds {
    fn layout(&self) -> ParamLayout {
        let k = self.num_regimes();
        ParamLayout::new().with("b", &[k, 2]).with("r", &[k])
    }

    fn values(&self) -> Vec<f64> {
        self.spec
            .b
            .iter()
            .flat_map(|b| b.iter().copied())
            .chain(self.spec.r_bias.iter().copied())
            .collect()
    }

    fn set_values(&mut self, v: &[f64]) -> Result<()> {
        let k = self.num_regimes();
        check_len("slds", 3 * k, v.len())?;
        for i in 0..k {
            self.spec.b[i] = [v[2 * i], v[2 * i + 1]];
        }
        self.spec.r_bias.copy_from_slice(&v[2 * k..]);
        Ok(())
    }
}

impl ModelGradient for Slds {
    fn accumulate_step_grad(
        &self,
        _t: usize,
        prev: Option<&SldsState>,
        x: &SldsState,
        _y: &Vec<f64>,
        scale: f64,
        out: &mut [f64],
    ) {
        let Some(p) = prev else { return };
        let k = self.num_regimes();
        let z = x.z;
        let d = Vector2::new(x.x[0], x.x[1]) - self.mean_x(z, prev);
        let gb = self.q[z].inv * d;
        out[2 * z] += scale * gb[0];
        out[2 * z + 1] += scale * gb[1];
        let lp = self.log_switch_probs(Some(p));
        for i in 0..k {
            let ind = if i == z { 1.0 } else { 0.0 };
            out[2 * k + i] += scale * (ind - lp[i].exp());
        }
    }
}

/// Ancestral sample of `(z, x, y)`.
pub fn slds_sample<R: Rng + ?Sized>(
    model: &Slds,
    horizon: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<[f64; 2]>, Vec<Vec<f64>>) {
    let (xs, ys) = model.sample_joint(horizon, rng);
    (xs.iter().map(|s| s.z).collect(), xs.iter().map(|s| s.x).collect(), ys)
}

pub fn slds_logjoint(model: &Slds, z: &[usize], x: &[[f64; 2]], y: &[Vec<f64>]) -> Result<f64> {
    if z.len() != x.len() || x.len() != y.len() {
        return Err(Error::InvalidArgument("z, x and y lengths differ".into()));
    }
    let states: Vec<SldsState> = z.iter().zip(x).map(|(&z, &x)| SldsState { z, x }).collect();
    if let Some(bad) = z.iter().find(|&&k| k >= model.num_regimes()) {
        return Err(Error::InvalidArgument(format!("regime {bad} out of range")));
    }
    Ok(model.log_joint(&states, y))
}

/// Exact posterior summaries from path enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SldsOracle {
    pub log_z: f64,
    /// `p(z_t = k | y)`, `T x K`.
    pub z_marginals: Vec<Vec<f64>>,
    /// `E[x_t | y]`.
    pub x_means: Vec<[f64; 2]>,
    /// `Cov[x_t | y]`.
    pub x_covs: Vec<[[f64; 2]; 2]>,
}

pub const ENUMERATION_BUDGET: u128 = 1 << 16;

/// Enumerates all `K^T` regime paths. Requires a non-recurrent model.
pub fn enumerate_posterior(model: &Slds, ys: &[Vec<f64>]) -> Result<SldsOracle> {
    if model.is_recurrent() {
        return Err(Error::InvalidArgument(
            "enumeration oracle requires R = 0 (non-recurrent switching)".into(),
        ));
    }
    let k = model.num_regimes();
    let horizon = ys.len();
    let paths = (k as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if paths > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            paths,
            budget: ENUMERATION_BUDGET,
        });
    }
    let log_pz0 = -(k as f64).ln();
    let lse_r = logsumexp(&model.spec.r_bias);
    let log_pz: Vec<f64> = model.spec.r_bias.iter().map(|r| r - lse_r).collect();

    let mut log_w = Vec::with_capacity(paths as usize);
    let mut per_path = Vec::with_capacity(paths as usize);
    let mut z = vec![0usize; horizon];
    for code in 0..paths as usize {
        let mut c = code;
        for zt in z.iter_mut() {
            *zt = c % k;
            c /= k;
        }
        let prior: f64 = log_pz0 + z.iter().skip(1).map(|&zt| log_pz[zt]).sum::<f64>();
        let (ev, means, covs) = path_smoother(model, &z, ys);
        log_w.push(prior + ev);
        per_path.push((z.clone(), means, covs));
    }
    let log_z = logsumexp(&log_w);
    let mut z_marginals = vec![vec![0.0; k]; horizon];
    let mut m1 = vec![Vector2::zeros(); horizon];
    let mut m2 = vec![Matrix2::zeros(); horizon];
    for (lw, (zs, means, covs)) in log_w.iter().zip(&per_path) {
        let p = (lw - log_z).exp();
        for t in 0..horizon {
            z_marginals[t][zs[t]] += p;
            m1[t] += p * means[t];
            m2[t] += p * (covs[t] + means[t] * means[t].transpose());
        }
    }
    let x_means = m1.iter().map(|m| [m[0], m[1]]).collect();
    let x_covs = m1
        .iter()
        .zip(&m2)
        .map(|(m, s)| {
            let c = s - m * m.transpose();
            [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]]
        })
        .collect();
    Ok(SldsOracle {
        log_z,
        z_marginals,
        x_means,
        x_covs,
    })
}

/// Kalman filter plus RTS smoother along one regime path. Returns the log
/// evidence and smoothed means and covariances.
fn path_smoother(
    model: &Slds,
    z: &[usize],
    ys: &[Vec<f64>],
) -> (f64, Vec<Vector2<f64>>, Vec<Matrix2<f64>>) {
    let horizon = ys.len();
    let dy = model.dim_y();
    let c = &model.c;
    let d = DVector::from_column_slice(&model.spec.d);
    let mut pred_m = Vec::with_capacity(horizon);
    let mut pred_p = Vec::with_capacity(horizon);
    let mut filt_m: Vec<Vector2<f64>> = Vec::with_capacity(horizon);
    let mut filt_p: Vec<Matrix2<f64>> = Vec::with_capacity(horizon);
    let mut log_ev = 0.0;
    for t in 0..horizon {
        let zt = z[t];
        let qm = {
            let q = model.spec.q[zt];
            Matrix2::new(q[0][0], q[0][1], q[1][0], q[1][1])
        };
        let (m, p) = if t == 0 {
            (Vector2::zeros(), qm)
        } else {
            let a = model.a[zt];
            let b = model.spec.b[zt];
            (
                a * filt_m[t - 1] + Vector2::new(b[0], b[1]),
                a * filt_p[t - 1] * a.transpose() + qm,
            )
        };
        let pm = DMatrix::from_column_slice(2, 2, p.as_slice());
        let innov_cov = c * &pm * c.transpose() + &model.s_mat;
        let y = DVector::from_column_slice(&ys[t]);
        let resid = y - (c * DVector::from_column_slice(m.as_slice()) + &d);
        let chol = innov_cov
            .clone()
            .cholesky()
            .expect("innovation covariance is positive definite");
        let sol = chol.solve(&resid);
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        log_ev += -0.5 * (dy as f64 * LN_2PI + log_det + resid.dot(&sol));
        // gain = P C^T S^-1
        let pct = &pm * c.transpose();
        let gain = chol.solve(&pct.transpose()).transpose();
        let new_m = DVector::from_column_slice(m.as_slice()) + &gain * &resid;
        let new_p = &pm - &gain * c * &pm;
        pred_m.push(m);
        pred_p.push(p);
        filt_m.push(Vector2::new(new_m[0], new_m[1]));
        let np = Matrix2::new(new_p[(0, 0)], new_p[(0, 1)], new_p[(1, 0)], new_p[(1, 1)]);
        filt_p.push(0.5 * (np + np.transpose()));
    }
    let mut sm = filt_m.clone();
    let mut sp = filt_p.clone();
    for t in (0..horizon.saturating_sub(1)).rev() {
        let a = model.a[z[t + 1]];
        let pinv = pred_p[t + 1].try_inverse().expect("predictive covariance is invertible");
        let g = filt_p[t] * a.transpose() * pinv;
        sm[t] = filt_m[t] + g * (sm[t + 1] - pred_m[t + 1]);
        let p = filt_p[t] + g * (sp[t + 1] - pred_p[t + 1]) * g.transpose();
        sp[t] = 0.5 * (p + p.transpose());
    }
    (log_ev, sm, sp)
}

/// Mean-field proposal `prod_t q(z_t) q(x_t)` with categorical `q(z_t)` and
/// diagonal Gaussian `q(x_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SldsMeanField {
    pub k: usize,
    /// `T x 2`, row-major.
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    /// `T x K`, row-major.
    pub logits: Vec<f64>,
}

impl SldsMeanField {
    pub fn new(horizon: usize, k: usize) -> Self {
        SldsMeanField {
            k,
            mu: vec![0.0; 2 * horizon],
            log_var: vec![0.0; 2 * horizon],
            logits: vec![0.0; k * horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.mu.len() / 2
    }

    pub fn log_probs(&self, t: usize) -> Vec<f64> {
        let l = &self.logits[t * self.k..(t + 1) * self.k];
        let lse = logsumexp(l);
        l.iter().map(|v| v - lse).collect()
    }

    pub fn probs(&self, t: usize) -> Vec<f64> {
        self.log_probs(t).into_iter().map(f64::exp).collect()
    }

    pub fn log_q(&self, t: usize, s: &SldsState) -> f64 {
        let mut lq = self.log_probs(t)[s.z];
        for j in 0..2 {
            lq += crate::ssm::log_normal(s.x[j], self.mu[2 * t + j], self.log_var[2 * t + j].exp());
        }
        lq
    }

    pub fn sample_at<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> SldsState {
        let z = sample_categorical(&self.probs(t), rng);
        let mut x = [0.0; 2];
        for (j, xj) in x.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *xj = self.mu[2 * t + j] + (0.5 * self.log_var[2 * t + j]).exp() * e;
        }
        SldsState { z, x }
    }

    /// Adds `scale * grad log q_t(s)` into `out` (layout order).
    pub fn accumulate_grad(&self, t: usize, s: &SldsState, scale: f64, out: &mut [f64]) {
        let horizon = self.horizon();
        for j in 0..2 {
            let i = 2 * t + j;
            let var = self.log_var[i].exp();
            let dx = s.x[j] - self.mu[i];
            out[i] += scale * dx / var;
            out[2 * horizon + i] += scale * (-0.5 + 0.5 * dx * dx / var);
        }
        let base = 4 * horizon + t * self.k;
        for (i, lp) in self.log_probs(t).into_iter().enumerate() {
            let ind = if i == s.z { 1.0 } else { 0.0 };
            out[base + i] += scale * (ind - lp.exp());
        }
    }
}

impl Parameterized for SldsMeanField {
    fn layout(&self) -> ParamLayout {
        let t = self.horizon();
        ParamLayout::new()
            .with("mu", &[t, 2])
            .with("log_var", &[t, 2])
            .with("logits", &[t, self.k])
    }

    fn values(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.log_var).chain(&self.logits).copied().collect()
    }

    fn set_values(&mut self, v: &[f64]) -> Result<()> {
        let t = self.horizon();
        check_len("slds proposal", 4 * t + self.k * t, v.len())?;
        self.mu.copy_from_slice(&v[..2 * t]);
        self.log_var.copy_from_slice(&v[2 * t..4 * t]);
        self.logits.copy_from_slice(&v[4 * t..]);
        Ok(())
    }
}

impl Proposal<Slds> for SldsMeanField {
    fn sample<R: Rng + ?Sized>(&self, _m: &Slds, t: usize, _prev: Option<&SldsState>, _ys: &[Vec<f64>], rng: &mut R) -> SldsState {
        self.sample_at(t, rng)
    }

    fn log_density(&self, _m: &Slds, t: usize, _prev: Option<&SldsState>, x: &SldsState, _ys: &[Vec<f64>]) -> f64 {
        self.log_q(t, x)
    }
}

impl ProposalGradient<Slds> for SldsMeanField {
    fn accumulate_log_density_grad(
        &self,
        _m: &Slds,
        t: usize,
        _prev: Option<&SldsState>,
        x: &SldsState,
        _ys: &[Vec<f64>],
        scale: f64,
        out: &mut [f64],
    ) {
        self.accumulate_grad(t, x, scale, out);
    }
}

/// Twist `log N(x; mu1, P1^-1) - log N(x; mu2, P2^-1) + c[t, z]`, a full
/// quadratic in `x_t`, with `mu1 = W_t y_{t+1:T} + bias1_t`.
///
/// Each precision is `P = L L^T` with `L` lower triangular, stored per step
/// as `[ln l11, l21, ln l22]`. `W_t` is `2 x (T D)` acting on the
/// observation sequence with entries at or before `t` ignored. Zero
/// initialisation gives `log r = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SldsTwist {
    pub horizon: usize,
    pub k: usize,
    pub dim_y: usize,
    /// `T x 2 x (T D)`.
    pub w: Vec<f64>,
    pub bias1: Vec<f64>,
    /// `T x 3`.
    pub prec1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub prec2: Vec<f64>,
    /// `T x K`.
    pub c: Vec<f64>,
}

/// `log N(x; mu, (L L^T)^-1)` and its gradients in `mu` and the packed factor.
fn gauss_prec(x: &[f64; 2], mu: [f64; 2], packed: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
    let (l11, l21, l22) = (packed[0].exp(), packed[1], packed[2].exp());
    let d = [x[0] - mu[0], x[1] - mu[1]];
    let u0 = l11 * d[0] + l21 * d[1];
    let u1 = l22 * d[1];
    let f = -LN_2PI + packed[0] + packed[2] - 0.5 * (u0 * u0 + u1 * u1);
    let g_mu = [l11 * u0, l21 * u0 + l22 * u1];
    let g_l = [1.0 - u0 * l11 * d[0], -u0 * d[1], 1.0 - u1 * l22 * d[1]];
    (f, g_mu, g_l)
}

impl SldsTwist {
    pub fn new(horizon: usize, k: usize, dim_y: usize) -> Self {
        SldsTwist {
            horizon,
            k,
            dim_y,
            w: vec![0.0; horizon * 2 * horizon * dim_y],
            bias1: vec![0.0; 2 * horizon],
            prec1: vec![0.0; 3 * horizon],
            mu2: vec![0.0; 2 * horizon],
            prec2: vec![0.0; 3 * horizon],
            c: vec![0.0; horizon * k],
        }
    }

    fn row(&self, t: usize, j: usize) -> &[f64] {
        let width = self.horizon * self.dim_y;
        let start = (t * 2 + j) * width;
        &self.w[start..start + width]
    }

    fn mu1(&self, t: usize, ys: &[Vec<f64>]) -> [f64; 2] {
        let mut out = [self.bias1[2 * t], self.bias1[2 * t + 1]];
        for (j, o) in out.iter_mut().enumerate() {
            let row = self.row(t, j);
            for (s, y) in ys.iter().enumerate().skip(t + 1) {
                for (e, v) in y.iter().enumerate() {
                    *o += row[s * self.dim_y + e] * v;
                }
            }
        }
        out
    }

    pub fn eval(&self, t: usize, s: &SldsState, ys: &[Vec<f64>]) -> f64 {
        if t + 1 >= self.horizon {
            return 0.0;
        }
        let mu2 = [self.mu2[2 * t], self.mu2[2 * t + 1]];
        let (f1, _, _) = gauss_prec(&s.x, self.mu1(t, ys), &self.prec1[3 * t..3 * t + 3]);
        let (f2, _, _) = gauss_prec(&s.x, mu2, &self.prec2[3 * t..3 * t + 3]);
        self.c[t * self.k + s.z] + f1 - f2
    }
}

impl Parameterized for SldsTwist {
    fn layout(&self) -> ParamLayout {
        let t = self.horizon;
        ParamLayout::new()
            .with("w", &[t, 2, t * self.dim_y])
            .with("bias1", &[t, 2])
            .with("prec1", &[t, 3])
            .with("mu2", &[t, 2])
            .with("prec2", &[t, 3])
            .with("c", &[t, self.k])
    }

    fn values(&self) -> Vec<f64> {
        self.w
            .iter()
            .chain(&self.bias1)
            .chain(&self.prec1)
            .chain(&self.mu2)
            .chain(&self.prec2)
            .chain(&self.c)
            .copied()
            .collect()
    }

    fn set_values(&mut self, v: &[f64]) -> Result<()> {
        check_len("slds twist", self.layout().total_len(), v.len())?;
        let mut off = 0;
        for block in [
            &mut self.w,
            &mut self.bias1,
            &mut self.prec1,
            &mut self.mu2,
            &mut self.prec2,
            &mut self.c,
        ] {
            let n = block.len();
            block.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

impl Twist<Slds> for SldsTwist {
    fn log_twist(&self, t: usize, x: &SldsState, ys: &[Vec<f64>]) -> f64 {
        self.eval(t, x, ys)
    }
}

impl DreTwist<Slds> for SldsTwist {
    fn accumulate_twist_grad(&self, t: usize, s: &SldsState, ys: &[Vec<f64>], scale: f64, out: &mut [f64]) {
        if t + 1 >= self.horizon {
            return;
        }
        let horizon = self.horizon;
        let width = horizon * self.dim_y;
        let nw = self.w.len();
        let o_b1 = nw;
        let o_p1 = o_b1 + 2 * horizon;
        let o_m2 = o_p1 + 3 * horizon;
        let o_p2 = o_m2 + 2 * horizon;
        let o_c = o_p2 + 3 * horizon;
        let mu2 = [self.mu2[2 * t], self.mu2[2 * t + 1]];
        let (_, g_mu1, g_l1) = gauss_prec(&s.x, self.mu1(t, ys), &self.prec1[3 * t..3 * t + 3]);
        let (_, g_mu2, g_l2) = gauss_prec(&s.x, mu2, &self.prec2[3 * t..3 * t + 3]);
        for j in 0..2 {
            out[o_b1 + 2 * t + j] += scale * g_mu1[j];
            out[o_m2 + 2 * t + j] -= scale * g_mu2[j];
            let start = (t * 2 + j) * width;
            for (sidx, y) in ys.iter().enumerate().skip(t + 1) {
                for (e, v) in y.iter().enumerate() {
                    out[start + sidx * self.dim_y + e] += scale * g_mu1[j] * v;
                }
            }
        }
        for k in 0..3 {
            out[o_p1 + 3 * t + k] += scale * g_l1[k];
            out[o_p2 + 3 * t + k] -= scale * g_l2[k];
        }
        out[o_c + t * self.k + s.z] += scale;
    }
}
