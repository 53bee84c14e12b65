//! Markovian state-space models, proposals and twists.
//!
//! Time indices are 0-based throughout: a sequence of length `T` has steps
//! `0..T`, and step 0 has no predecessor (`prev == None`).

use rand::Rng;

use super::params::{check_len, ParamLayout, Parameterized};
use crate::error::Result;

/// A state-space model `p(x_1) p(y_1|x_1) prod_t p(x_t|x_{t-1}) p(y_t|x_t)`
/// given through per-step log-densities and samplers.
pub trait StateSpaceModel: Sync {
    type State: Clone + Send + Sync;
    type Obs: Clone + Send + Sync;

    /// Default sequence length used by the samplers.
    fn horizon(&self) -> usize;

    /// `log p(x_t | x_{t-1})`, or `log p(x_1)` when `prev` is `None`.
    fn log_transition(&self, t: usize, prev: Option<&Self::State>, x: &Self::State) -> f64;

    fn log_observation(&self, t: usize, x: &Self::State, y: &Self::Obs) -> f64;

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        t: usize,
        prev: Option<&Self::State>,
        rng: &mut R,
    ) -> Self::State;

    fn sample_observation<R: Rng + ?Sized>(&self, t: usize, x: &Self::State, rng: &mut R)
        -> Self::Obs;

    /// `log p(x_t, y_t | x_{t-1})`.
    fn log_step(&self, t: usize, prev: Option<&Self::State>, x: &Self::State, y: &Self::Obs) -> f64 {
        self.log_transition(t, prev, x) + self.log_observation(t, x, y)
    }

    fn sample_latents<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<Self::State> {
        let mut xs: Vec<Self::State> = Vec::with_capacity(len);
        for t in 0..len {
            let x = self.sample_transition(t, xs.last(), rng);
            xs.push(x);
        }
        xs
    }

    fn sample_joint<R: Rng + ?Sized>(
        &self,
        len: usize,
        rng: &mut R,
    ) -> (Vec<Self::State>, Vec<Self::Obs>) {
        let xs = self.sample_latents(len, rng);
        let ys = xs
            .iter()
            .enumerate()
            .map(|(t, x)| self.sample_observation(t, x, rng))
            .collect();
        (xs, ys)
    }

    /// Sum of the per-step terms.
    fn log_joint(&self, xs: &[Self::State], ys: &[Self::Obs]) -> f64 {
        (0..xs.len())
            .map(|t| self.log_step(t, t.checked_sub(1).map(|p| &xs[p]), &xs[t], &ys[t]))
            .sum()
    }
}

/// Gradient hook for `grad_theta log p(x_t, y_t | x_{t-1})`.
pub trait ModelGradient: StateSpaceModel + Parameterized {
    /// Adds `scale * grad_theta log p(x_t, y_t | x_{t-1})` into `out`.
    fn accumulate_step_grad(
        &self,
        t: usize,
        prev: Option<&Self::State>,
        x: &Self::State,
        y: &Self::Obs,
        scale: f64,
        out: &mut [f64],
    );
}

/// A proposal `q(x_t | x_{t-1}, y_{1:T})`.
pub trait Proposal<M: StateSpaceModel>: Sync {
    fn sample<R: Rng + ?Sized>(
        &self,
        model: &M,
        t: usize,
        prev: Option<&M::State>,
        ys: &[M::Obs],
        rng: &mut R,
    ) -> M::State;

    fn log_density(
        &self,
        model: &M,
        t: usize,
        prev: Option<&M::State>,
        x: &M::State,
        ys: &[M::Obs],
    ) -> f64;
}

/// Gradient hook for `grad_phi log q(x_t | x_{t-1}, y)`.
pub trait ProposalGradient<M: StateSpaceModel>: Proposal<M> + Parameterized {
    #[allow(clippy::too_many_arguments)]
    fn accumulate_log_density_grad(
        &self,
        model: &M,
        t: usize,
        prev: Option<&M::State>,
        x: &M::State,
        ys: &[M::Obs],
        scale: f64,
        out: &mut [f64],
    );
}

/// Proposes from the model's own transition.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bootstrap;

impl<M: StateSpaceModel> Proposal<M> for Bootstrap {
    fn sample<R: Rng + ?Sized>(
        &self,
        model: &M,
        t: usize,
        prev: Option<&M::State>,
        _ys: &[M::Obs],
        rng: &mut R,
    ) -> M::State {
        model.sample_transition(t, prev, rng)
    }

    fn log_density(
        &self,
        model: &M,
        t: usize,
        prev: Option<&M::State>,
        x: &M::State,
        _ys: &[M::Obs],
    ) -> f64 {
        model.log_transition(t, prev, x)
    }
}

/// No learnable parameters; lets fixed proposals feed the particle estimators.
impl Parameterized for Bootstrap {
    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
    }

    fn values(&self) -> Vec<f64> {
        Vec::new()
    }

    fn set_values(&mut self, values: &[f64]) -> Result<()> {
        check_len("bootstrap", 0, values.len())
    }
}

impl<M: StateSpaceModel> ProposalGradient<M> for Bootstrap {
    fn accumulate_log_density_grad(
        &self,
        _model: &M,
        _t: usize,
        _prev: Option<&M::State>,
        _x: &M::State,
        _ys: &[M::Obs],
        _scale: f64,
        _out: &mut [f64],
    ) {
    }
}

/// A twist `log r(y_{t+1:T}, x_t)`, approximating the lookahead
/// `log p(y_{t+1:T} | x_t)` up to an `x_t`-independent constant.
///
/// Only called for `t < T - 1`; the final target carries no twist.
pub trait Twist<M: StateSpaceModel>: Sync {
    fn log_twist(&self, t: usize, x: &M::State, ys: &[M::Obs]) -> f64;
}
