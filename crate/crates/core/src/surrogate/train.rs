use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Gradients, SurrogateModel, TrainMeta};
use crate::error::{Error, Result};
use crate::record::MaskScoreRecord;
use crate::rng::{seeded, RNG_NAME};

/// Mini-batch SGD with classical momentum and step learning-rate decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.008,
            momentum: 0.9,
            lr_decay_factor: 0.1,
            lr_decay_every: 100,
            epochs: 200,
            batch_size: 300,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Step schedule: `lr * factor^(epoch / every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.learning_rate;
        }
        self.learning_rate * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "learning rate must be positive and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SurrogateModel,
    /// Mean squared error over each epoch's mini-batches.
    pub loss_curve: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }
}

/// Fits a fresh surrogate to `dataset` by minimizing mean squared error.
///
/// The model is initialized from `config.seed`; the same generator then
/// drives the per-epoch shuffles, so identical inputs give identical weights.
/// The last mini-batch of an epoch keeps its natural (smaller) size.
pub fn train(dataset: &[MaskScoreRecord], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let input_dim = first.mask.len();
    for (index, record) in dataset.iter().enumerate() {
        if record.mask.len() != input_dim {
            return Err(Error::DimensionMismatch(format!(
                "record {index} has {} layers, expected {input_dim}",
                record.mask.len()
            )));
        }
        if !(0.0..=1.0).contains(&record.score) {
            return Err(Error::ScoreOutOfRange {
                index,
                score: record.score,
            });
        }
    }

    let mut rng = seeded(config.seed);
    let mut model = SurrogateModel::init_xavier(input_dim, &mut rng);
    let mut grads = Gradients::zeros(&model);
    let mut velocity = Gradients::zeros(&model);
    let mut scratch = vec![0.0; model.hidden_dim];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let lr = config.lr_at(epoch);
        let mut epoch_sse = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let record = &dataset[idx];
                epoch_sse += model.accumulate_gradient(record.mask.bits(), record.score, scale, &mut grads, &mut scratch);
            }
            apply_momentum(&mut model, &mut velocity, &grads, lr, config.momentum);
            step += 1;
            if !model.is_finite() {
                return Err(Error::NonFinite { step });
            }
        }
        loss_curve.push(epoch_sse / dataset.len() as f64);
    }

    model.set_meta(TrainMeta {
        seed: config.seed,
        epochs: config.epochs,
        lr: config.learning_rate,
        momentum: config.momentum,
        lr_decay_factor: config.lr_decay_factor,
        lr_decay_every: config.lr_decay_every,
        batch_size: config.batch_size,
        shuffle: config.shuffle,
        init: super::INIT_SCHEME.into(),
        rng: RNG_NAME.into(),
    });
    Ok(TrainOutcome { model, loss_curve })
}

/// `v <- momentum * v - lr * g; theta <- theta + v`
fn apply_momentum(model: &mut SurrogateModel, velocity: &mut Gradients, grads: &Gradients, lr: f64, momentum: f64) {
    fn step(params: &mut [f64], vel: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
        for ((p, v), g) in params.iter_mut().zip(vel.iter_mut()).zip(grad) {
            *v = momentum * *v - lr * g;
            *p += *v;
        }
    }
    step(&mut model.w1, &mut velocity.w1, &grads.w1, lr, momentum);
    step(&mut model.b1, &mut velocity.b1, &grads.b1, lr, momentum);
    step(&mut model.w2, &mut velocity.w2, &grads.w2, lr, momentum);
    velocity.b2 = momentum * velocity.b2 - lr * grads.b2;
    model.b2 += velocity.b2;
}
