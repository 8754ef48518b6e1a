use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Samples;
use super::model::{argmax_rows, AttentionCnnModel};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub batch_size: usize,
    /// Epochs without a new best validation accuracy before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            patience: 25,
            max_epochs: 200,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights the model carries after training.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

const EVAL_CHUNK: usize = 512;

pub fn predict_all(model: &AttentionCnnModel, samples: &Samples) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, _) = samples.batch(chunk);
        out.extend(model.predict(&x)?);
    }
    Ok(out)
}

/// Overall accuracy in inference mode.
pub fn accuracy(model: &AttentionCnnModel, samples: &Samples) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("accuracy over an empty set".into()));
    }
    let pred = predict_all(model, samples)?;
    let hits = pred.iter().zip(samples.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Shuffled mini-batches; a trailing singleton is folded into the previous
/// batch because train-mode batch norm needs two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

/// Trains with ADAM until validation accuracy has not improved for
/// `patience` epochs (or `max_epochs`), then restores the best weights.
pub fn train(
    model: &mut AttentionCnnModel,
    train_set: &Samples,
    val_set: &Samples,
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if train_set.len() < 2 || val_set.is_empty() {
        return Err(Error::Data(format!(
            "training needs at least 2 training and 1 validation samples, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    if opts.batch_size < 2 || opts.max_epochs == 0 {
        return Err(Error::InvalidArgument(format!(
            "batch size {} and max epochs {} must be at least 2 and 1",
            opts.batch_size, opts.max_epochs
        )));
    }
    let c = model.num_classes();
    if let Some(&bad) = train_set
        .labels()
        .iter()
        .chain(val_set.labels())
        .find(|&&l| l >= c)
    {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = Adam::new(opts.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best_model = model.clone();
    model.zero_grad();

    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for (bi, idx) in batches(&order, opts.batch_size).into_iter().enumerate() {
            let (x, labels) = train_set.batch(idx);
            let (loss, probs) = model.loss_and_backward(&x, &labels, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            adam.step(model.params_mut());
            loss_sum += loss * idx.len() as f64;
            hits += argmax_rows(&probs)
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();
        }

        let val_accuracy = accuracy(model, val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: hits as f64 / train_set.len() as f64,
            val_accuracy,
        };
        debug!(
            "{} epoch {epoch}: loss {:.4} train acc {:.4} val acc {:.4}",
            model.config.name(),
            record.train_loss,
            record.train_accuracy,
            val_accuracy
        );
        history.epochs.push(record);

        if val_accuracy > history.best_val_accuracy {
            history.best_val_accuracy = val_accuracy;
            history.best_epoch = epoch;
            best_model.clone_from(model);
        } else if epoch - history.best_epoch >= opts.patience {
            history.stopped_early = true;
            break;
        }
    }

    *model = best_model;
    info!(
        "{} trained {} epochs, best val acc {:.4} at epoch {}",
        model.config.name(),
        history.epochs.len(),
        history.best_val_accuracy,
        history.best_epoch
    );
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_tail_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1], &[4, 5, 6, 7, 8]);
        let b = batches(&order, 3);
        assert_eq!(b.len(), 3);
    }
}
