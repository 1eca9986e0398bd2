use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::{
    forward_inputs, loss_and_gradient, Checkpoint, CheckpointMeta, CnnArch, CnnWeights, Dropout,
    Example,
};
use crate::error::{Error, Result};
use crate::patches::{augment_rotate, Patch4, TrainingSet};
use crate::synth::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum_start: f64,
    pub momentum_end: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            lr_start: 0.03,
            lr_end: 0.00001,
            momentum_start: 0.9,
            momentum_end: 0.999,
            batch_size: 128,
            max_epochs: 500,
            patience: 50,
            val_fraction: 0.25,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.lr_end
            && self.lr_end <= self.lr_start
            && 0.0 <= self.momentum_start
            && self.momentum_start <= self.momentum_end
            && self.momentum_end < 1.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.val_fraction > 0.0
            && self.val_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid training schedule {self:?}"
            )))
        }
    }

    fn progress(&self, epoch: usize) -> f64 {
        if self.max_epochs <= 1 {
            0.0
        } else {
            epoch as f64 / (self.max_epochs - 1) as f64
        }
    }

    /// Geometric interpolation from `lr_start` to `lr_end`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr_start * (self.lr_end / self.lr_start).powf(self.progress(epoch))
    }

    /// Linear interpolation from `momentum_start` to `momentum_end`.
    pub fn momentum(&self, epoch: usize) -> f64 {
        self.momentum_start + (self.momentum_end - self.momentum_start) * self.progress(epoch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Nesterov momentum in the form `v <- mu v - lr g; w <- w + mu v - lr g`.
#[derive(Clone, Debug)]
pub struct Nesterov {
    velocity: Vec<f32>,
}

impl Nesterov {
    pub fn new(n: usize) -> Self {
        Self {
            velocity: vec![0.0; n],
        }
    }

    pub fn velocity(&self) -> &[f32] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f64, momentum: f64) {
        let (lr, mu) = (lr as f32, momentum as f32);
        for ((w, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = mu * *v - lr * g;
            *w += mu * *v - lr * g;
        }
    }
}

fn mean_loss_and_accuracy(weights: &CnnWeights, items: &[(&Patch4, u8)]) -> (f64, f64) {
    let inputs: Vec<&[f32]> = items.iter().map(|(p, _)| p.data.as_slice()).collect();
    let probs = forward_inputs(weights, &inputs, Dropout::Off);
    let mut loss = 0.0;
    let mut correct = 0;
    for (p, (_, t)) in probs.iter().zip(items) {
        loss -= p[usize::from(*t)].max(1e-300).ln();
        if usize::from(p[1] > p[0]) == usize::from(*t) {
            correct += 1;
        }
    }
    let n = items.len() as f64;
    (loss / n, f64::from(correct) / n)
}

/// Trains from a seeded initialization and returns the weights of the epoch
/// with the lowest validation loss.
///
/// Every epoch draws a fresh validation subset, shuffles the rest into
/// mini-batches, and rotates each mini-batch by a random multiple of 90
/// degrees. Training stops after `patience` epochs without a new best
/// validation loss, or after `max_epochs`.
pub fn train(
    set: &TrainingSet,
    arch: &CnnArch,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<Checkpoint> {
    schedule.validate()?;
    let items = set.labeled();
    if items.len() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut weights = CnnWeights::init(arch.clone(), derive_seed(seed, &[0x1417]))?;
    if let Some((p, _)) = items.iter().find(|(p, _)| p.data.len() != arch.input_len()) {
        return Err(Error::ShapeMismatch(format!(
            "training patch of side {} for a network taking {}",
            p.size, arch.input_size
        )));
    }
    let n_val =
        ((items.len() as f64 * schedule.val_fraction).round() as usize).clamp(1, items.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Nesterov::new(weights.params.len());
    let mut best = (f64::INFINITY, 0usize, weights.params.clone());
    let mut curve = Vec::new();

    for epoch in 0..schedule.max_epochs {
        let lr = schedule.learning_rate(epoch);
        let mu = schedule.momentum(epoch);
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);
        let (val_idx, train_idx) = order.split_at(n_val);

        let mut train_loss = 0.0;
        for batch in train_idx.chunks(schedule.batch_size) {
            let k: i32 = rng.gen_range(0..4);
            let rotated: Vec<Patch4> = batch
                .iter()
                .map(|&i| augment_rotate(items[i].0, k))
                .collect();
            let examples: Vec<Example> = batch
                .iter()
                .zip(&rotated)
                .map(|(&i, p)| Example {
                    input: &p.data,
                    target: items[i].1,
                    dropout: Dropout::On(rng.gen()),
                })
                .collect();
            let (loss, grad) = loss_and_gradient(&weights, &examples)?;
            train_loss += loss * batch.len() as f64;
            opt.step(&mut weights.params, &grad, lr, mu);
        }
        train_loss /= train_idx.len() as f64;
        if !weights.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "training diverged at epoch {epoch}"
            )));
        }

        let val: Vec<(&Patch4, u8)> = val_idx.iter().map(|&i| items[i]).collect();
        let (val_loss, val_accuracy) = mean_loss_and_accuracy(&weights, &val);
        info!(epoch, train_loss, val_loss, val_accuracy, lr, "epoch");
        curve.push(EpochStats {
            epoch,
            learning_rate: lr,
            momentum: mu,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, weights.params.clone());
        } else if epoch - best.1 >= schedule.patience {
            break;
        }
    }

    let (val_loss, best_epoch, params) = best;
    let meta = CheckpointMeta::new(
        arch.clone(),
        seed,
        curve.len(),
        best_epoch,
        Some(val_loss),
        curve,
    );
    Ok(Checkpoint {
        weights: CnnWeights::from_params(arch.clone(), params)?,
        meta,
    })
}
