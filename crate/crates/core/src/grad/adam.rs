use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::ParamLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam, minimising.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(hyper: AdamHyper, len: usize) -> Self {
        AdamState {
            hyper,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One update of `params` along `-grad` at the configured learning rate.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], layout: &ParamLayout) -> Result<()> {
        let lr = self.hyper.lr;
        self.step_with_lr(params, grad, layout, lr)
    }

    pub fn step_with_lr(
        &mut self,
        params: &mut [f64],
        grad: &[f64],
        layout: &ParamLayout,
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                name: "adam".into(),
                expected: self.m.len(),
                found: if params.len() != self.m.len() { params.len() } else { grad.len() },
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                name: layout.label_of(i),
            });
        }
        let AdamHyper { beta1, beta2, eps, .. } = self.hyper;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Applies one Adam update to `params` given `grads`, returning the new state.
pub fn adam_step(
    mut state: AdamState,
    params: &mut [f64],
    grads: &[f64],
    layout: &ParamLayout,
) -> Result<AdamState> {
    state.step(params, grads, layout)?;
    Ok(state)
}

/// Piecewise-constant learning rate: `base`, multiplied by `factor` once
/// `step >= at` for each milestone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    #[serde(default)]
    pub milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        LrSchedule {
            base,
            milestones: Vec::new(),
        }
    }

    pub fn with_decay(mut self, at: usize, factor: f64) -> Self {
        self.milestones.push((at, factor));
        self
    }

    pub fn at(&self, step: usize) -> f64 {
        self.milestones
            .iter()
            .filter(|(at, _)| step >= *at)
            .fold(self.base, |lr, (_, f)| lr * f)
    }
}
