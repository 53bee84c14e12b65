//! One-dimensional logistic density-ratio toy: a quadratic logit
//! `g(x) = a x^2 + b x + c` separating samples of two densities.
//!
//! For Gaussians the true log ratio is itself quadratic, so the population
//! minimiser of the balanced logistic loss is known in closed form.

use crate::error::{Error, Result};
use crate::grad::adam::{AdamHyper, AdamState};
use crate::ssm::{log_normal, log_sigmoid, ParamLayout};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadraticLogit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticLogit {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    /// `log N(x; m1, v1) - log N(x; m2, v2)` written as a quadratic.
    pub fn gaussian_log_ratio(m1: f64, v1: f64, m2: f64, v2: f64) -> Self {
        let a = -0.5 * (1.0 / v1 - 1.0 / v2);
        let b = m1 / v1 - m2 / v2;
        // fix c through the value at x = 0
        let c = log_normal(0.0, m1, v1) - log_normal(0.0, m2, v2);
        QuadraticLogit { a, b, c }
    }

    /// Mean logistic loss with `pos` labelled 1 and `neg` labelled 0.
    pub fn loss_and_grad(&self, pos: &[f64], neg: &[f64]) -> Result<(f64, [f64; 3])> {
        let n = (pos.len() + neg.len()) as f64;
        if n == 0.0 {
            return Err(Error::EmptyBatch);
        }
        let mut loss = 0.0;
        let mut g = [0.0; 3];
        let mut push = |x: f64, positive: bool| {
            let z = self.eval(x);
            let (l, dl) = if positive {
                (-log_sigmoid(z), -log_sigmoid(-z).exp())
            } else {
                (-log_sigmoid(-z), log_sigmoid(z).exp())
            };
            loss += l;
            g[0] += dl * x * x;
            g[1] += dl * x;
            g[2] += dl;
        };
        pos.iter().for_each(|&x| push(x, true));
        neg.iter().for_each(|&x| push(x, false));
        Ok((loss / n, g.map(|v| v / n)))
    }

    /// Full-batch Adam on a fixed sample.
    pub fn fit(&mut self, pos: &[f64], neg: &[f64], steps: usize, lr: f64) -> Result<()> {
        let layout = ParamLayout::new().with("abc", &[3]);
        let mut adam = AdamState::new(AdamHyper::with_lr(lr), 3);
        let mut v = [self.a, self.b, self.c];
        for step in 0..steps {
            let here = QuadraticLogit { a: v[0], b: v[1], c: v[2] };
            let (loss, g) = here.loss_and_grad(pos, neg)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            adam.step(&mut v, &g, &layout)?;
        }
        *self = QuadraticLogit { a: v[0], b: v[1], c: v[2] };
        Ok(())
    }

    pub fn negated(&self) -> Self {
        QuadraticLogit {
            a: -self.a,
            b: -self.b,
            c: -self.c,
        }
    }
}
