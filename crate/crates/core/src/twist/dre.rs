//! Density-ratio estimation by binary classification.
//!
//! Positives are `(x_t, y_{t+1:T})` taken from one joint rollout of the
//! model, negatives pair the same `y_{t+1:T}` with `x~_t` from an
//! independent latent rollout. Classes are balanced, so the optimal logit is
//! the log density ratio with no prior-odds offset.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::adam::{AdamHyper, AdamState, LrSchedule};
use crate::ssm::{log_sigmoid, StateSpaceModel};

use super::DreTwist;

#[derive(Debug, Clone)]
pub struct DreExample<S> {
    pub seq: usize,
    pub t: usize,
    pub state: S,
}

#[derive(Debug, Clone)]
pub struct DreBatch<S, O> {
    pub sequences: Vec<Vec<O>>,
    pub positives: Vec<DreExample<S>>,
    pub negatives: Vec<DreExample<S>>,
}

impl<S, O> DreBatch<S, O> {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `batch_size` joint rollouts and as many independent latent
/// rollouts; each contributes one positive and one negative for every
/// `t < T - 1`.
pub fn sample_dre_batch<M, R>(
    model: &M,
    batch_size: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<DreBatch<M::State, M::Obs>>
where
    M: StateSpaceModel,
    R: Rng + ?Sized,
{
    if batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let per_seq = horizon.saturating_sub(1);
    let mut sequences = Vec::with_capacity(batch_size);
    let mut positives = Vec::with_capacity(batch_size * per_seq);
    let mut negatives = Vec::with_capacity(batch_size * per_seq);
    for b in 0..batch_size {
        let (xs, ys) = model.sample_joint(horizon, rng);
        let xs_neg = model.sample_latents(horizon, rng);
        for (t, (x, xn)) in xs.into_iter().zip(xs_neg).take(per_seq).enumerate() {
            positives.push(DreExample { seq: b, t, state: x });
            negatives.push(DreExample { seq: b, t, state: xn });
        }
        sequences.push(ys);
    }
    Ok(DreBatch {
        sequences,
        positives,
        negatives,
    })
}

/// Mean binary cross-entropy per example and its gradient.
///
/// This is the negated Algorithm-2 objective divided by two, so a twist
/// that is identically zero scores `ln 2`.
pub fn dre_loss_and_grad<M, Tw>(twist: &Tw, batch: &DreBatch<M::State, M::Obs>) -> Result<(f64, Vec<f64>)>
where
    M: StateSpaceModel,
    Tw: DreTwist<M>,
{
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; twist.layout().total_len()];
    let mut loss = 0.0;
    for (examples, positive) in [(&batch.positives, true), (&batch.negatives, false)] {
        for ex in examples {
            let ys = &batch.sequences[ex.seq];
            let g = twist.log_twist(ex.t, &ex.state, ys);
            let (l, dl) = if positive {
                // -log sigma(g), derivative sigma(g) - 1 = -sigma(-g)
                (-log_sigmoid(g), -log_sigmoid(-g).exp())
            } else {
                (-log_sigmoid(-g), log_sigmoid(g).exp())
            };
            loss += l;
            twist.accumulate_twist_grad(ex.t, &ex.state, ys, dl / n, &mut grad);
        }
    }
    Ok((loss / n, grad))
}

/// Fraction of examples on the correct side of logit 0.
pub fn dre_accuracy<M, Tw>(twist: &Tw, batch: &DreBatch<M::State, M::Obs>) -> f64
where
    M: StateSpaceModel,
    Tw: DreTwist<M>,
{
    let mut correct = 0usize;
    for ex in &batch.positives {
        if twist.log_twist(ex.t, &ex.state, &batch.sequences[ex.seq]) > 0.0 {
            correct += 1;
        }
    }
    for ex in &batch.negatives {
        if twist.log_twist(ex.t, &ex.state, &batch.sequences[ex.seq]) <= 0.0 {
            correct += 1;
        }
    }
    correct as f64 / batch.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwistTrainConfig {
    pub batch_size: usize,
    pub horizon: usize,
    pub lr: LrSchedule,
    /// Polyak-Ruppert averaging: from this global step on, the twist handed
    /// back after each `run` is the mean of the iterates, while the
    /// optimiser keeps stepping the raw iterate.
    pub average_from: Option<usize>,
}

impl TwistTrainConfig {
    pub fn new(batch_size: usize, horizon: usize, lr: LrSchedule) -> Self {
        TwistTrainConfig {
            batch_size,
            horizon,
            lr,
            average_from: None,
        }
    }

    pub fn with_averaging(mut self, from: usize) -> Self {
        self.average_from = Some(from);
        self
    }
}

/// Twist optimiser state that persists across training rounds.
#[derive(Debug, Clone)]
pub struct TwistTrainer {
    pub cfg: TwistTrainConfig,
    adam: AdamState,
    steps_done: usize,
    raw: Option<Vec<f64>>,
    avg: Vec<f64>,
    avg_count: usize,
}

impl TwistTrainer {
    pub fn new(cfg: TwistTrainConfig, num_params: usize) -> Self {
        let adam = AdamState::new(AdamHyper::with_lr(cfg.lr.base), num_params);
        TwistTrainer {
            cfg,
            adam,
            steps_done: 0,
            raw: None,
            avg: vec![0.0; num_params],
            avg_count: 0,
        }
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Number of iterates in the running average.
    pub fn averaged_steps(&self) -> usize {
        self.avg_count
    }

    /// Runs `steps` updates with a fresh batch each. `monitor` sees the
    /// global step index, the raw twist after the update, and the batch loss.
    pub fn run<M, Tw, R, F>(
        &mut self,
        model: &M,
        twist: &mut Tw,
        steps: usize,
        rng: &mut R,
        mut monitor: F,
    ) -> Result<Vec<f64>>
    where
        M: StateSpaceModel,
        Tw: DreTwist<M>,
        R: Rng + ?Sized,
        F: FnMut(usize, &Tw, f64),
    {
        let layout = twist.layout();
        if let Some(raw) = &self.raw {
            twist.set_values(raw)?;
        }
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let batch = sample_dre_batch(model, self.cfg.batch_size, self.cfg.horizon, rng)?;
            let (loss, grad) = dre_loss_and_grad(twist, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: self.steps_done,
                });
            }
            let mut values = twist.values();
            let lr = self.cfg.lr.at(self.steps_done);
            self.adam.step_with_lr(&mut values, &grad, &layout, lr)?;
            twist.set_values(&values)?;
            if self.cfg.average_from.is_some_and(|from| self.steps_done >= from) {
                self.avg_count += 1;
                let k = self.avg_count as f64;
                for (a, v) in self.avg.iter_mut().zip(&values) {
                    *a += (v - *a) / k;
                }
            }
            monitor(self.steps_done, twist, loss);
            losses.push(loss);
            self.steps_done += 1;
        }
        if self.avg_count > 0 {
            self.raw = Some(twist.values());
            twist.set_values(&self.avg)?;
        }
        Ok(losses)
    }
}

/// Trains `twist` for `steps` fresh-batch updates from a new optimiser state.
pub fn train_twist<M, Tw, R, F>(
    model: &M,
    twist: &mut Tw,
    steps: usize,
    cfg: TwistTrainConfig,
    rng: &mut R,
    monitor: F,
) -> Result<Vec<f64>>
where
    M: StateSpaceModel,
    Tw: DreTwist<M>,
    R: Rng + ?Sized,
    F: FnMut(usize, &Tw, f64),
{
    let mut trainer = TwistTrainer::new(cfg, twist.layout().total_len());
    trainer.run(model, twist, steps, rng, monitor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lgssm::LgssmParams;
    use crate::ssm::RngStream;
    use crate::ssm::Parameterized;
    use crate::twist::QuadraticTwist;
    use rand::Rng;

    #[test]
    fn batch_shape() {
        let m = LgssmParams::new(1.0, 1.0, 3).unwrap();
        let mut rng = RngStream::new(0, 0);
        let b = sample_dre_batch(&m, 1, 3, &mut rng).unwrap();
        assert_eq!(b.positives.len(), 2);
        assert_eq!(b.negatives.len(), 2);
        assert_eq!(b.positives.iter().map(|e| e.t).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let m = LgssmParams::new(1.0, 1.0, 3).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(sample_dre_batch(&m, 0, 3, &mut rng), Err(Error::EmptyBatch)));
    }

    #[test]
    fn zero_twist_scores_ln2() {
        let m = LgssmParams::new(1.0, 1.0, 5).unwrap();
        let mut tw = QuadraticTwist::new(5);
        tw.weights.iter_mut().for_each(|w| *w = 0.0);
        let mut rng = RngStream::new(1, 0);
        let b = sample_dre_batch(&m, 8, 5, &mut rng).unwrap();
        let (loss, _) = dre_loss_and_grad::<LgssmParams, _>(&tw, &b).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let m = LgssmParams::new(1.0, 0.5, 5).unwrap();
        let mut rng = RngStream::new(2, 0);
        let b = sample_dre_batch(&m, 4, 5, &mut rng).unwrap();
        let mut tw = QuadraticTwist::new(5);
        let mut init = RngStream::new(3, 0);
        let vals: Vec<f64> = tw.values().iter().map(|_| init.random_range(-0.5..0.5)).collect();
        tw.set_values(&vals).unwrap();
        let (_, g) = dre_loss_and_grad::<LgssmParams, _>(&tw, &b).unwrap();
        let h = 1e-5;
        for k in 0..vals.len() {
            let mut v = vals.clone();
            v[k] += h;
            let mut a = tw.clone();
            a.set_values(&v).unwrap();
            v[k] -= 2.0 * h;
            let mut c = tw.clone();
            c.set_values(&v).unwrap();
            let fd = (dre_loss_and_grad::<LgssmParams, _>(&a, &b).unwrap().0 - dre_loss_and_grad::<LgssmParams, _>(&c, &b).unwrap().0) / (2.0 * h);
            let scale = fd.abs().max(g[k].abs());
            if scale < 1e-9 {
                continue;
            }
            assert!((g[k] - fd).abs() / scale < 1e-6, "k={k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn zero_steps_is_a_no_op() {
        let m = LgssmParams::new(1.0, 1.0, 4).unwrap();
        let mut tw = QuadraticTwist::new(4);
        let before = tw.clone();
        let cfg = TwistTrainConfig::new(8, 4, LrSchedule::constant(1e-3));
        let mut rng = RngStream::new(0, 0);
        let losses = train_twist(&m, &mut tw, 0, cfg, &mut rng, |_, _, _| {}).unwrap();
        assert!(losses.is_empty());
        assert_eq!(tw, before);
    }

    #[test]
    fn averaging_returns_the_mean_iterate() {
        let m = LgssmParams::new(1.0, 1.0, 4).unwrap();
        let mut tw = QuadraticTwist::new(4);
        let cfg = TwistTrainConfig::new(8, 4, LrSchedule::constant(1e-2)).with_averaging(1);
        let mut seen: Vec<Vec<f64>> = Vec::new();
        let mut rng = RngStream::new(0, 0);
        let mut trainer = TwistTrainer::new(cfg, tw.layout().total_len());
        trainer
            .run(&m, &mut tw, 4, &mut rng, |s, t: &QuadraticTwist, _| {
                if s >= 1 {
                    seen.push(t.values());
                }
            })
            .unwrap();
        assert_eq!(trainer.averaged_steps(), 3);
        for (j, v) in tw.values().iter().enumerate() {
            let mean = seen.iter().map(|x| x[j]).sum::<f64>() / 3.0;
            assert!((v - mean).abs() < 1e-12);
        }
        assert_eq!(trainer.raw.as_ref(), seen.last());
    }
}
