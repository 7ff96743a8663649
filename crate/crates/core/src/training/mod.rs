//! Training: mini-batch Adadelta with early stopping on validation loss.

mod adadelta;
mod checkpoint;
mod early_stop;
mod gradients;

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use adadelta::{Accumulators, AdadeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
pub use checkpoint::{header as checkpoint_header, Checkpoint};
pub use early_stop::{EarlyStopping, Observation, MIN_DELTA};
pub use gradients::{
    backward, backward_full, batch_loss, central_difference, document_loss, finite_difference_gradient,
    finite_difference_input, max_relative_error, nll_from_logits, nll_loss, relative_error, Backprop, Gradients,
    PROB_FLOOR,
};

use crate::data::{split_indices, LabeledCorpus};
use crate::embeddings::EmbeddingTable;
use crate::nn::{forward_with_mask, sample_dropout_mask, ModelConfig, ModelParams, SentenceMatrix};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; `None` disables
    /// early stopping entirely, including the best-epoch restore.
    pub patience: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub finetune_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            max_epochs: 100,
            patience: Some(5),
            batch_size: 50,
            seed: 0,
            validation_fraction: 0.2,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            finetune_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("Adadelta needs 0 < rho < 1 and epsilon > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Early,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Early => "early",
            StopReason::MaxEpochs => "max_epochs",
        })
    }
}

/// Per-epoch mean losses, measured in inference mode after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based index of the epoch whose parameters were returned.
    pub best_index: usize,
    pub stop: StopReason,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// One-based epoch number of the best epoch.
    pub fn best_epoch(&self) -> usize {
        self.best_index + 1
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_index]
    }

    /// `epoch,train_loss,val_loss` lines with a header, epochs one-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{t},{v}\n", i + 1));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: TrainHistory,
    /// Fine-tuned embedding rows, when fine-tuning was enabled.
    pub tuned_embeddings: Option<EmbeddingTable>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.model.clone(), self.tuned_embeddings.clone())
    }
}

/// Dropout mask for one document in one epoch, derived from counters so it
/// can be recomputed instead of stored.
pub fn dropout_mask(config: &TrainConfig, k: usize, epoch: usize, doc: usize) -> Result<Vec<f64>> {
    let mut r = rng::stream(config.seed, &[rng::DROPOUT, epoch as u64, doc as u64]);
    sample_dropout_mask(k, config.model.dropout, &mut r)
}

/// Mean inference-mode loss over a set of documents.
fn mean_loss(model: &ModelParams, matrices: &[SentenceMatrix], labels: &[usize]) -> Result<f64> {
    if matrices.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = matrices
        .par_iter()
        .zip(labels)
        .map(|(d, &y)| forward_with_mask(model, d, None).map(|t| nll_from_logits(&t.logits, y)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(batch_loss(losses) / matrices.len() as f64)
}

struct Split<'a> {
    tokens: Vec<&'a [String]>,
    labels: Vec<usize>,
}

impl<'a> Split<'a> {
    fn new(corpus: &'a LabeledCorpus, idx: &[usize]) -> Self {
        Split {
            tokens: idx.iter().map(|&i| corpus.docs()[i].tokens.as_slice()).collect(),
            labels: idx.iter().map(|&i| corpus.docs()[i].label).collect(),
        }
    }

    fn embed(&self, model: &ModelParams, table: &EmbeddingTable) -> Result<Vec<SentenceMatrix>> {
        self.tokens.iter().map(|t| model.embed(t, table)).collect()
    }
}

/// Train a model on `corpus`.
///
/// A stratified validation split is taken with the config seed. After every
/// epoch the mean validation loss is measured; training stops once it has
/// not improved for `patience` epochs and the best epoch's parameters are
/// returned. With `patience: None` all epochs run and the final parameters
/// are returned. The result is a pure function of the inputs.
pub fn train(corpus: &LabeledCorpus, config: &TrainConfig, embeddings: &EmbeddingTable) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let (train_idx, val_idx) = split_indices(corpus, config.validation_fraction, config.seed)?;
    let train_set = Split::new(corpus, &train_idx);
    let val_set = Split::new(corpus, &val_idx);
    let classes = corpus.schema().levels();
    let mut present = vec![false; classes];
    for &y in &train_set.labels {
        present[y] = true;
    }
    if let Some(c) = present.iter().position(|p| !p) {
        return Err(Error::Config(format!("class {c} has no documents in the training split")));
    }

    let mut model = ModelParams::init(
        &config.model,
        embeddings.dim(),
        classes,
        &mut rng::stream(config.seed, &[rng::INIT]),
    )?;
    let mut optimizer = AdadeltaState::new(&model, config.rho, config.epsilon)?;
    let mut table = config.finetune_embeddings.then(|| embeddings.clone());

    let mut train_mats = train_set.embed(&model, embeddings)?;
    let mut val_mats = val_set.embed(&model, embeddings)?;

    let k = model.feature_len();
    let mut stopper: EarlyStopping<(ModelParams, Option<EmbeddingTable>)> = EarlyStopping::new(config.patience);
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_index: 0,
        stop: StopReason::MaxEpochs,
    };
    let mut tuned_tokens = std::collections::BTreeSet::new();

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train_set.labels.len()).collect();
        order.shuffle(&mut rng::stream(config.seed, &[rng::EPOCH_SHUFFLE, epoch as u64]));

        for batch in order.chunks(config.batch_size) {
            let per_doc = batch
                .par_iter()
                .map(|&i| -> Result<Backprop> {
                    let mask = dropout_mask(config, k, epoch, train_idx[i])?;
                    let tuned;
                    let d = match &table {
                        Some(t) => {
                            tuned = model.embed(train_set.tokens[i], t)?;
                            &tuned
                        }
                        None => &train_mats[i],
                    };
                    backward_full(&model, d, train_set.labels[i], Some(&mask))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut grads = Gradients::zeros_like(&model);
            for (bp, &i) in per_doc.iter().zip(batch) {
                if !bp.loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at epoch {}", epoch + 1)));
                }
                grads.accumulate(&bp.grads);
                if table.is_some() {
                    let s = model.dim();
                    for (row, tok) in train_set.tokens[i].iter().enumerate() {
                        let g = &bp.input[row * s..(row + 1) * s];
                        let slot = grads.embeddings.entry(tok.clone()).or_insert_with(|| vec![0.0; s]);
                        for (a, b) in slot.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                }
            }
            optimizer
                .step(&mut model, &grads)
                .map_err(|e| Error::NonFinite(format!("epoch {}: {e}", epoch + 1)))?;
            if let Some(t) = &mut table {
                optimizer.step_embeddings(t, &grads)?;
                tuned_tokens.extend(grads.embeddings.keys().cloned());
            }
        }

        if let Some(t) = &table {
            train_mats = train_set.embed(&model, t)?;
            val_mats = val_set.embed(&model, t)?;
        }
        let train_loss = mean_loss(&model, &train_mats, &train_set.labels)?;
        let val_loss = if val_mats.is_empty() {
            train_loss
        } else {
            mean_loss(&model, &val_mats, &val_set.labels)?
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {}", epoch + 1)));
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);

        if config.patience.is_none() {
            continue;
        }
        let obs = stopper.observe(val_loss, || {
            let tuned = table.as_ref().map(|t| extract_rows(t, &tuned_tokens));
            (model.clone(), tuned)
        });
        if obs.stop {
            history.stop = StopReason::Early;
            break;
        }
    }

    // Without early stopping the last epoch's parameters are returned.
    let (model, tuned_embeddings) = if config.patience.is_none() {
        history.best_index = history.epochs() - 1;
        let tuned = table.as_ref().map(|t| extract_rows(t, &tuned_tokens));
        (model, tuned)
    } else {
        let (best_index, best) = stopper.into_best().expect("at least one epoch ran");
        history.best_index = best_index;
        best
    };
    Ok(TrainOutcome {
        model,
        history,
        tuned_embeddings,
    })
}

fn extract_rows(table: &EmbeddingTable, tokens: &std::collections::BTreeSet<String>) -> EmbeddingTable {
    let mut out = EmbeddingTable::new(table.dim(), table.seed()).expect("dimension checked at load");
    for t in tokens {
        if let Some(v) = table.get(t) {
            out.insert(t, v).expect("same dimension");
        }
    }
    out
}
