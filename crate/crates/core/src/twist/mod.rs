//! Twists learned by density-ratio estimation.

pub mod dre;
pub mod quadratic;
pub mod toy;

use crate::ssm::{Parameterized, StateSpaceModel, Twist};

pub use dre::{
    dre_accuracy, dre_loss_and_grad, sample_dre_batch, train_twist, DreBatch, DreExample,
    TwistTrainConfig, TwistTrainer,
};
pub use quadratic::{quadratic_twist_eval, QuadraticCoeffs, QuadraticTwist};

/// A parametric twist whose output doubles as a classifier logit.
pub trait DreTwist<M: StateSpaceModel>: Twist<M> + Parameterized {
    /// Adds `scale * grad_psi log r(y_{t+1:T}, x_t)` into `out`.
    fn accumulate_twist_grad(&self, t: usize, x: &M::State, ys: &[M::Obs], scale: f64, out: &mut [f64]);
}
