use alloc::vec;
use alloc::vec::Vec;

use super::model::Model;
use super::optim::sgd_momentum_step;
use super::propagate::Mode;
use crate::data::Dataset;
use crate::rng::streams;
use crate::{Error, Result, Rng};

/// Minibatch SGD settings. Schedules are `(first epoch, value)` steps with
/// strictly increasing epochs starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_schedule: Vec<(usize, f64)>,
    pub momentum_schedule: Vec<(usize, f64)>,
    pub weight_decay: f64,
    pub seed: u64,
    /// Evaluate every this many epochs (the last epoch is always evaluated).
    pub eval_every: usize,
}

impl TrainConfig {
    /// Constant learning rate, momentum 0.9 stepping to 0.99 at half the
    /// epoch budget, no weight decay.
    pub fn new(batch_size: usize, epochs: usize, lr: f64, seed: u64) -> Self {
        let mut momentum_schedule = vec![(0, 0.9)];
        if epochs / 2 > 0 {
            momentum_schedule.push((epochs / 2, 0.99));
        }
        Self {
            batch_size,
            epochs,
            lr_schedule: vec![(0, lr)],
            momentum_schedule,
            weight_decay: 0.0,
            seed,
            eval_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        for (name, sched) in [("learning-rate", &self.lr_schedule), ("momentum", &self.momentum_schedule)] {
            if sched.first().map(|s| s.0) != Some(0) {
                return Err(Error::InvalidConfig(alloc::format!("{name} schedule must start at epoch 0")));
            }
            if sched.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} schedule epochs must be strictly increasing"
                )));
            }
        }
        if self.lr_schedule.iter().any(|&(_, lr)| !(lr > 0.0 && lr.is_finite())) {
            return bad("learning rates must be positive");
        }
        if self.momentum_schedule.iter().any(|&(_, mu)| !(0.0..1.0).contains(&mu)) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_value(&self.lr_schedule, epoch)
    }

    pub fn momentum_at(&self, epoch: usize) -> f64 {
        step_value(&self.momentum_schedule, epoch)
    }
}

fn step_value(schedule: &[(usize, f64)], epoch: usize) -> f64 {
    schedule
        .iter()
        .take_while(|&&(start, _)| start <= epoch)
        .last()
        .map(|&(_, v)| v)
        .unwrap_or(schedule[0].1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub error_rate: f64,
    pub logloss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss on corrupted training batches.
    pub train_loss: f64,
    pub eval: Option<Evaluation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn last_eval(&self) -> Option<Evaluation> {
        self.epochs.iter().rev().find_map(|r| r.eval)
    }
}

/// A training run that stopped early; `history` holds the completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainError {
    pub error: Error,
    pub history: History,
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "training stopped after {} epoch(s): {}", self.history.epochs.len(), self.error)
    }
}

impl core::error::Error for TrainError {}

/// Trains `model` in place. Each epoch shuffles the training set from the
/// `(seed, shuffle, epoch)` stream, drops the last partial batch, and
/// corrupts batch `b` from the `(seed, corrupt, epoch, b)` stream.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    config: &TrainConfig,
    eval_set: Option<&Dataset>,
) -> core::result::Result<History, TrainError> {
    let mut history = History::default();
    let fail = |error: Error, history: History| TrainError { error, history };
    if let Err(e) = config.validate() {
        return Err(fail(e, history));
    }
    if config.epochs == 0 {
        return Ok(history);
    }
    if train_set.is_empty() || config.batch_size > train_set.len() {
        let e = Error::InsufficientData(alloc::format!(
            "batch size {} with {} training examples",
            config.batch_size,
            train_set.len()
        ));
        return Err(fail(e, history));
    }
    let m = config.batch_size;
    let batches = train_set.len() / m;
    let shuffle_base = Rng::new(config.seed, streams::SHUFFLE);
    let corrupt_base = Rng::new(config.seed, streams::CORRUPT);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        shuffle_base.derive(&[epoch as u64]).shuffle(&mut order);
        let lr = config.lr_at(epoch);
        let momentum = config.momentum_at(epoch);
        let mut loss_sum = 0.0;
        for b in 0..batches {
            let idx = &order[b * m..(b + 1) * m];
            let batch = train_set.examples().gather(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels()[i]).collect();
            let rng = corrupt_base.derive(&[epoch as u64, b as u64]);
            let step = model
                .forward(&batch, &labels, Mode::Train, &rng)
                .and_then(|pass| {
                    let grads = model.backward(&pass, &labels)?;
                    Ok((pass.loss, grads))
                })
                .and_then(|(loss, grads)| {
                    sgd_momentum_step(model, &grads, lr, momentum, config.weight_decay)?;
                    Ok(loss)
                });
            match step {
                Ok(loss) => loss_sum += loss,
                Err(e) => return Err(fail(e, history)),
            }
        }
        let is_eval_epoch = (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
        let eval = match eval_set {
            Some(ds) if is_eval_epoch => match evaluate(model, ds) {
                Ok(ev) => Some(ev),
                Err(e) => return Err(fail(e, history)),
            },
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            eval,
        });
    }
    Ok(history)
}

const EVAL_CHUNK: usize = 500;

/// Misclassification rate (argmax, ties to the lowest class) and mean
/// cross-entropy on clean inputs.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("empty evaluation set".into()));
    }
    let k = model.classes();
    let mut wrong = 0usize;
    let mut loss = 0.0;
    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let batch = dataset.examples().gather(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels()[i]).collect();
        let pass = model.forward_eval(&batch, &labels)?;
        loss += pass.per_example_loss.iter().sum::<f64>();
        let probs = pass.probabilities().data();
        for (i, &y) in labels.iter().enumerate() {
            let row = &probs[i * k..(i + 1) * k];
            let mut best = 0;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best != y {
                wrong += 1;
            }
        }
    }
    Ok(Evaluation {
        error_rate: wrong as f64 / dataset.len() as f64,
        logloss: loss / dataset.len() as f64,
    })
}
