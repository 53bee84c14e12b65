//! Quadratic twist for the 1-D LGSSM.
//!
//! `log r_t(x) = log N(x; mu1_t(y), v1_t) - log N(x; 0, v2_t) = a x^2 + b x + c`
//! with `mu1_t(y) = sum_{s>t} W[t][s] y_s + bias[t]`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::lgssm::{LgssmParams, LookaheadInfo};
use crate::ssm::params::check_len;
use crate::ssm::{log_normal, ParamLayout, Parameterized, StateSpaceModel, Twist};

use super::DreTwist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTwist {
    pub horizon: usize,
    pub log_var1: Vec<f64>,
    pub log_var2: Vec<f64>,
    /// Row-major `T x T`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `(a, b, c)` of the quadratic `a x^2 + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticTwist {
    /// Weights `1/T`, biases and log-variances 0.
    pub fn new(horizon: usize) -> Self {
        QuadraticTwist {
            horizon,
            log_var1: vec![0.0; horizon],
            log_var2: vec![0.0; horizon],
            weights: vec![1.0 / horizon as f64; horizon * horizon],
            bias: vec![0.0; horizon],
        }
    }

    /// The twist equal to `log p(x_t | y_{t+1:T}) - log p(x_t)` under `params`.
    pub fn analytic(params: &LgssmParams, horizon: usize) -> Self {
        let info = LookaheadInfo::new(params, horizon);
        let mut tw = QuadraticTwist::new(horizon);
        tw.weights.iter_mut().for_each(|w| *w = 0.0);
        for t in 0..horizon {
            let prior_var = (t + 1) as f64 * params.sigma_x2;
            let post_var = 1.0 / (info.precision[t] + 1.0 / prior_var);
            tw.log_var1[t] = post_var.ln();
            tw.log_var2[t] = prior_var.ln();
            for s in 0..horizon {
                tw.weights[t * horizon + s] = post_var * info.coeffs[t][s];
            }
        }
        tw
    }

    pub fn mu1(&self, t: usize, ys: &[f64]) -> f64 {
        let row = &self.weights[t * self.horizon..(t + 1) * self.horizon];
        let mut m = self.bias[t];
        for s in t + 1..self.horizon.min(ys.len()) {
            m += row[s] * ys[s];
        }
        m
    }

    pub fn coeffs(&self, t: usize, ys: &[f64]) -> QuadraticCoeffs {
        if t + 1 >= self.horizon {
            return QuadraticCoeffs { a: 0.0, b: 0.0, c: 0.0 };
        }
        let v1 = self.log_var1[t].exp();
        let v2 = self.log_var2[t].exp();
        let mu = self.mu1(t, ys);
        QuadraticCoeffs {
            a: -0.5 * (1.0 / v1 - 1.0 / v2),
            b: mu / v1,
            c: -mu * mu / (2.0 * v1) - 0.5 * self.log_var1[t] + 0.5 * self.log_var2[t],
        }
    }

    /// Coefficients of `b` as a linear function of `y` (`b = sum_s beta_s y_s + beta_0`).
    pub fn b_coeffs(&self, t: usize) -> Vec<f64> {
        let v1 = self.log_var1[t].exp();
        let mut out = vec![0.0; self.horizon];
        for s in t + 1..self.horizon {
            out[s] = self.weights[t * self.horizon + s] / v1;
        }
        out
    }

    /// Quadratic-twist evaluation; identically 0 at the final step.
    pub fn eval(&self, t: usize, x: f64, ys: &[f64]) -> f64 {
        if t + 1 >= self.horizon {
            return 0.0;
        }
        let mu = self.mu1(t, ys);
        log_normal(x, mu, self.log_var1[t].exp()) - log_normal(x, 0.0, self.log_var2[t].exp())
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let t = self.horizon;
        (0, t, 2 * t, 2 * t + t * t)
    }
}

/// Evaluates the quadratic twist at `(t, x_t, y)`.
pub fn quadratic_twist_eval(psi: &QuadraticTwist, t: usize, x: f64, ys: &[f64]) -> f64 {
    psi.eval(t, x, ys)
}

impl Parameterized for QuadraticTwist {
    fn layout(&self) -> ParamLayout {
        let t = self.horizon;
        ParamLayout::new()
            .with("log_var1", &[t])
            .with("log_var2", &[t])
            .with("weights", &[t, t])
            .with("bias", &[t])
    }

    fn values(&self) -> Vec<f64> {
        self.log_var1
            .iter()
            .chain(&self.log_var2)
            .chain(&self.weights)
            .chain(&self.bias)
            .copied()
            .collect()
    }

    fn set_values(&mut self, v: &[f64]) -> Result<()> {
        let t = self.horizon;
        check_len("quadratic twist", 3 * t + t * t, v.len())?;
        let (o1, o2, ow, ob) = self.offsets();
        self.log_var1.copy_from_slice(&v[o1..o2]);
        self.log_var2.copy_from_slice(&v[o2..ow]);
        self.weights.copy_from_slice(&v[ow..ob]);
        self.bias.copy_from_slice(&v[ob..]);
        Ok(())
    }
}

impl<M: StateSpaceModel<State = f64, Obs = f64>> Twist<M> for QuadraticTwist {
    fn log_twist(&self, t: usize, x: &f64, ys: &[f64]) -> f64 {
        self.eval(t, *x, ys)
    }
}

impl<M: StateSpaceModel<State = f64, Obs = f64>> DreTwist<M> for QuadraticTwist {
    fn accumulate_twist_grad(&self, t: usize, x: &f64, ys: &[f64], scale: f64, out: &mut [f64]) {
        if t + 1 >= self.horizon {
            return;
        }
        let (o1, o2, ow, ob) = self.offsets();
        let v1 = self.log_var1[t].exp();
        let v2 = self.log_var2[t].exp();
        let mu = self.mu1(t, ys);
        let d = x - mu;
        out[o1 + t] += scale * (-0.5 + 0.5 * d * d / v1);
        out[o2 + t] += scale * (0.5 - 0.5 * x * x / v2);
        let dmu = scale * d / v1;
        let n = self.horizon;
        for s in t + 1..n.min(ys.len()) {
            out[ow + t * n + s] += dmu * ys[s];
        }
        out[ob + t] += dmu;
    }
}
