use dvlnav_tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{batch_inputs, batch_targets, forward_batch, predict_velocities, Params, StWeights};
use super::{Normalization, Optimizer, StHyperParams, TrainingWindow};
use crate::{NavError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean minibatch objective (standardized units).
    pub train_loss: f64,
    /// Validation mean squared error, (m/s)².
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochLoss>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Mean squared error, per component, of the predicted velocities.
pub fn mse(predicted: &[nalgebra::Vector3<f64>], windows: &[&TrainingWindow]) -> f64 {
    let n = (3 * windows.len()).max(1) as f64;
    predicted
        .iter()
        .zip(windows)
        .map(|(p, w)| (p - w.target).norm_squared())
        .sum::<f64>()
        / n
}

/// Error of the predictor that repeats the most recent DVL velocity.
pub fn persist_last_mse(windows: &[&TrainingWindow]) -> f64 {
    let preds: Vec<_> = windows.iter().map(|w| w.last_dvl()).collect();
    mse(&preds, windows)
}

enum OptState {
    Momentum { velocity: Vec<Tensor> },
    Adam { m: Vec<Tensor>, v: Vec<Tensor>, step: i32 },
}

impl OptState {
    fn new(kind: Optimizer, w: &StWeights) -> Self {
        let zeros = || w.tensors().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        match kind {
            Optimizer::Momentum => OptState::Momentum { velocity: zeros() },
            Optimizer::Adam => OptState::Adam {
                m: zeros(),
                v: zeros(),
                step: 0,
            },
        }
    }

    fn step(&mut self, hp: &StHyperParams, w: &mut StWeights, grads: &[Option<Tensor>]) -> Result<()> {
        let lr = hp.learning_rate;
        match self {
            OptState::Momentum { velocity } => {
                for ((param, vel), g) in w.tensors_mut().zip(velocity.iter_mut()).zip(grads) {
                    let Some(g) = g else { continue };
                    for (vi, gi) in vel.data_mut().iter_mut().zip(g.data()) {
                        *vi = hp.momentum * *vi + gi;
                    }
                    param.axpy(-lr, vel)?;
                }
            }
            OptState::Adam { m, v, step } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                *step += 1;
                let c1 = 1.0 - B1.powi(*step);
                let c2 = 1.0 - B2.powi(*step);
                for (((param, mi), vi), g) in w.tensors_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grads) {
                    let Some(g) = g else { continue };
                    let p = param.data_mut();
                    for (j, gj) in g.data().iter().enumerate() {
                        let mj = &mut mi.data_mut()[j];
                        *mj = B1 * *mj + (1.0 - B1) * gj;
                        let m_hat = *mj / c1;
                        let vj = &mut vi.data_mut()[j];
                        *vj = B2 * *vj + (1.0 - B2) * gj * gj;
                        let v_hat = *vj / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + 1e-8);
                    }
                }
            }
        }
        Ok(())
    }
}

fn split_with(rng: &mut ChaCha8Rng, n: usize, validation_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);
    let (v, t) = order.split_at(n_val);
    (t.to_vec(), v.to_vec())
}

/// The `(train, validation)` index sets that [`train`] uses for a dataset of
/// `n ≥ 2` windows and the same seed.
pub fn validation_split(n: usize, validation_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(NavError::invalid(format!("a split needs at least 2 windows, got {n}")));
    }
    Ok(split_with(&mut ChaCha8Rng::seed_from_u64(seed), n, validation_fraction))
}

/// Minibatch MSE training with a seeded 75:25 train/validation split. The
/// returned weights are those of the epoch with the lowest validation MSE.
pub fn train(dataset: &[TrainingWindow], hp: &StHyperParams, seed: u64) -> Result<(StWeights, TrainReport)> {
    hp.validate()?;
    if dataset.len() < 2 {
        return Err(NavError::invalid(format!(
            "training needs at least 2 windows, got {}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_indices, val_indices) = split_with(&mut rng, dataset.len(), hp.validation_fraction);
    let train_set: Vec<&TrainingWindow> = train_indices.iter().map(|&i| &dataset[i]).collect();
    let val_set: Vec<&TrainingWindow> = val_indices.iter().map(|&i| &dataset[i]).collect();

    let mut weights = StWeights::init(hp, seed)?;
    weights.norm = Normalization::fit(&train_set);
    let mut opt = OptState::new(hp.optimizer, &weights);
    let mut best = weights.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(hp.epochs);
    let mut batch_order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=hp.epochs {
        batch_order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in batch_order.chunks(hp.batch_size) {
            let batch: Vec<&TrainingWindow> = chunk.iter().map(|&i| train_set[i]).collect();
            let tape = Tape::new();
            let p = Params::bind(&tape, &weights, true);
            let (imu, dvl) = batch_inputs(&weights.norm, &batch);
            let target = tape.constant(batch_targets(&weights.norm, &batch));
            let out = forward_batch(&p, hp, tape.constant(imu), tape.constant(dvl), true, &mut rng)?;
            let loss = out.mse_loss(target)?;
            let value = loss.value().data()[0];
            if !value.is_finite() {
                return Err(NavError::Singular("training loss diverged"));
            }
            loss_sum += value * batch.len() as f64;
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Option<Tensor>> = p.vars().iter().map(|v| grads.take(*v)).collect();
            opt.step(hp, &mut weights, &grads)?;
        }
        let val_mse = mse(&predict_velocities(&weights, &val_set)?, &val_set);
        history.push(EpochLoss {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_mse,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best = weights.clone();
        }
    }
    if best_epoch == 0 {
        best_val = mse(&predict_velocities(&weights, &val_set)?, &val_set);
    }
    Ok((
        best,
        TrainReport {
            history,
            best_epoch,
            best_val_mse: best_val,
            train_indices,
            val_indices,
        },
    ))
}
