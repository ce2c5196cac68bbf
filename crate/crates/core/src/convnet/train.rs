use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward, loss, predict_classes};
use super::optim::{rmsprop_step, OptimizerState};
use super::{CnnModel, Real};
use crate::{Error, Result};

/// Encoded sequences with gold class indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodedSet {
    pub sequences: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Gold probabilities clamped before the log during this epoch.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub clamped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: CnnModel<F>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Fraction of `set` classified correctly (inference mode).
pub fn accuracy<F: Real>(model: &CnnModel<F>, set: &EncodedSet) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for chunk in (0..set.len()).collect::<Vec<_>>().chunks(256) {
        let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| set.sequences[i].clone()).collect();
        let pred = predict_classes(model, &batch)?;
        correct += chunk.iter().zip(pred).filter(|(&i, p)| set.labels[i] == *p).count();
    }
    Ok(correct as f64 / set.len() as f64)
}

pub fn train<F: Real>(model: CnnModel<F>, train_set: &EncodedSet, validation: &EncodedSet) -> Result<TrainOutcome<F>> {
    train_with(model, train_set, validation, |_| {})
}

/// Minibatch RMSProp with per-epoch learning-rate decay.
///
/// Shuffling and dropout draw from one stream seeded by `config.seed`. The
/// checkpoint kept is the first epoch reaching the best validation accuracy
/// (training accuracy when the validation set is empty).
pub fn train_with<F: Real>(
    mut model: CnnModel<F>,
    train_set: &EncodedSet,
    validation: &EncodedSet,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<F>> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if train_set.sequences.len() != train_set.labels.len() || validation.sequences.len() != validation.labels.len() {
        return Err(Error::Shape("sequence/label count mismatch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, CnnModel<F>)> = None;

    for epoch in 0..cfg.epochs {
        state.learning_rate = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut clamped = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| train_set.sequences[i].clone()).collect();
            let gold: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let (probs, trace) = forward(&model, &batch, true, &mut rng).map_err(|e| diverged(epoch, e))?;
            let lv = loss(&probs, &gold, &model, cfg.l2_lambda)?;
            if !lv.total.is_finite() {
                return Err(Error::Diverged { epoch, message: format!("loss became {}", lv.total) });
            }
            loss_sum += lv.total * chunk.len() as f64;
            clamped += lv.clamped;
            let grads = backward(&trace.expect("training trace"), &model, &gold, cfg.l2_lambda)?;
            rmsprop_step(&mut model, &grads, &mut state, &cfg).map_err(|e| diverged(epoch, e))?;
        }
        let record = EpochRecord {
            epoch,
            lr: state.learning_rate,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: accuracy(&model, train_set)?,
            val_acc: accuracy(&model, validation)?,
            clamped,
        };
        on_epoch(&record);
        let score = if validation.is_empty() { record.train_acc } else { record.val_acc };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
        }
        history.push(record);
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, 0),
    };
    Ok(TrainOutcome { model, history, best_epoch })
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(message) => Error::Diverged { epoch, message },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::CnnConfig;
    use crate::corpus::LabelSet;

    /// Class c documents contain tokens from {2+2c, 3+2c} mixed with shared filler.
    fn separable(n_per_class: usize, k: usize) -> EncodedSet {
        let mut set = EncodedSet::default();
        let filler = (2 + 2 * k) as u32;
        for i in 0..n_per_class {
            for c in 0..k {
                let cue = (2 + 2 * c + i % 2) as u32;
                let mut seq = vec![filler, filler + 1, cue, filler + (i % 3) as u32, filler];
                seq.rotate_left(i % 5);
                seq.resize(8, 0);
                set.sequences.push(seq);
                set.labels.push(c);
            }
        }
        set
    }

    fn cfg() -> CnnConfig {
        CnnConfig {
            filter_widths: vec![2, 3],
            filters_per_width: 16,
            embed_dim: 6,
            max_len: 8,
            num_classes: 4,
            batch_size: 8,
            epochs: 50,
            learning_rate: 1e-2,
            dropout: 0.0,
            l2_lambda: 0.0,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn separable_toy_reaches_full_train_accuracy() {
        let data = separable(10, 4);
        assert_eq!(data.len(), 40);
        let model = CnnModel::<f32>::new(cfg(), LabelSet::default(), 2 + 8 + 4).unwrap();
        let out = train(model, &data, &data).unwrap();
        assert_eq!(accuracy(&out.model, &data).unwrap(), 1.0, "{:?}", out.history.last());
        let best = out.history.iter().map(|r| r.train_acc).fold(0.0, f64::max);
        assert_eq!(out.history[out.best_epoch].train_acc, best);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(4, 4);
        let run = || {
            let c = CnnConfig { epochs: 3, ..cfg() };
            train(CnnModel::<f32>::new(c, LabelSet::default(), 14).unwrap(), &data, &data).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let model = CnnModel::<f32>::new(cfg(), LabelSet::default(), 14).unwrap();
        assert!(train(model, &EncodedSet::default(), &EncodedSet::default()).is_err());
    }

    #[test]
    fn learning_rate_follows_decay() {
        let data = separable(2, 4);
        let c = CnnConfig { epochs: 4, ..cfg() };
        let out = train(CnnModel::<f32>::new(c.clone(), LabelSet::default(), 14).unwrap(), &data, &data).unwrap();
        for r in &out.history {
            assert_eq!(r.lr, c.learning_rate_at(r.epoch));
        }
    }
}
