//! Shared state-space abstractions: model traits, log-weights, parameters
//! and seeded randomness.

pub mod model;
pub mod params;
pub mod rng;
pub mod weights;

pub use model::{Bootstrap, ModelGradient, Proposal, ProposalGradient, StateSpaceModel, Twist};
pub use params::{ParamBlock, ParamLayout, ParamVec, Parameterized};
pub use rng::RngStream;
pub use weights::{effective_sample_size, log_mean_exp, logsumexp, normalize_log_weights, LogWeights};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(x; mean, var)`.
#[inline]
pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Numerically stable `log(sigmoid(z))`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
