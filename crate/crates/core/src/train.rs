//! Per-example SGD with optional early stopping.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gru::{init_params, GruModel, LossTerm};
use crate::numerics::{ProbVector, Vector};
use crate::rng::{seeded, Stream};

/// Validation patience used when none is given.
pub const DEFAULT_PATIENCE: usize = 5;

#[derive(Debug, Clone)]
pub struct TrainExample {
    pub inputs: Vec<Vector>,
    pub terms: Vec<LossTerm>,
}

/// Embedded inputs with hard labels, evaluated through one head.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub inputs: Vec<Vec<Vector>>,
    pub labels: Vec<usize>,
    pub head: usize,
}

impl EvalSet {
    pub fn new(table: &EmbeddingTable, data: &LabeledDataset, head: usize) -> Self {
        EvalSet {
            inputs: data.embed(table),
            labels: data.labels(),
            head,
        }
    }
}

/// Fraction of examples whose argmax prediction (lowest index on ties)
/// equals the label.
pub fn accuracy(model: &GruModel, eval: &EvalSet) -> Result<f64> {
    if eval.inputs.is_empty() {
        return Err(Error::EmptyInput("evaluation set is empty".into()));
    }
    let mut correct = 0usize;
    for (x, y) in eval.inputs.iter().zip(&eval.labels) {
        if model.predict_inputs(eval.head, x)?.argmax() == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval.inputs.len() as f64)
}

/// Hard-label accuracy of `head` on a dataset.
pub fn evaluate_accuracy(model: &GruModel, head: usize, data: &LabeledDataset) -> Result<f64> {
    let classes = model
        .heads
        .get(head)
        .ok_or_else(|| Error::Config(format!("head index {head} out of range")))?
        .classes();
    if classes != data.classes() {
        return Err(Error::dim("evaluation classes", classes, data.classes()));
    }
    accuracy(model, &EvalSet::new(&model.embeddings, data, head))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lr: f64,
    pub epochs: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: Option<f64>,
    pub retention_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds on return.
    pub best_epoch: usize,
    pub steps: usize,
}

impl FitLog {
    pub fn best_val(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch).and_then(|e| e.val_acc)
    }
}

#[derive(Default, Clone, Copy)]
pub struct Monitors<'a> {
    pub val: Option<&'a EvalSet>,
    pub retention: Option<&'a EvalSet>,
}

fn mean_loss(model: &GruModel, data: &[TrainExample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in data {
        total += model.loss(&ex.inputs, &ex.terms)?;
    }
    Ok(total / data.len() as f64)
}

/// Runs `cfg.epochs` passes of shuffled per-example SGD.
///
/// Epoch 0 of the log describes the model before any update. With a
/// validation monitor and a patience, training stops after `patience`
/// epochs without a strict improvement and the best epoch is restored.
/// `on_step` sees the model after every update.
pub fn fit(
    model: &mut GruModel,
    data: &[TrainExample],
    cfg: &FitConfig,
    monitors: Monitors<'_>,
    shuffle: &mut ChaCha8Rng,
    on_step: &mut dyn FnMut(usize, &GruModel),
) -> Result<FitLog> {
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let evaluate = |m: &GruModel, set: Option<&EvalSet>| set.map(|s| accuracy(m, s)).transpose();
    let mut log = FitLog::default();
    log.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: mean_loss(model, data)?,
        val_acc: evaluate(model, monitors.val)?,
        retention_acc: evaluate(model, monitors.retention)?,
    });
    let early_stopping = monitors.val.is_some() && cfg.patience.is_some();
    let mut best = early_stopping.then(|| model.clone());
    let mut best_val = log.epochs[0].val_acc.unwrap_or(f64::NEG_INFINITY);
    let mut stale = 0usize;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(shuffle);
        let mut total = 0.0;
        for &i in &order {
            let ex = &data[i];
            let (loss, grads) = model.compute_gradients(&ex.inputs, &ex.terms)?;
            model.sgd_step(&grads, cfg.lr)?;
            total += loss;
            log.steps += 1;
            on_step(log.steps, model);
        }
        let train_loss = if data.is_empty() { 0.0 } else { total / data.len() as f64 };
        if !train_loss.is_finite() {
            return Err(Error::Numerical { context: format!("training loss diverged at epoch {epoch}") });
        }
        let val_acc = evaluate(model, monitors.val)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_acc,
            retention_acc: evaluate(model, monitors.retention)?,
        });
        if let (Some(v), Some(patience)) = (val_acc, cfg.patience.filter(|_| early_stopping)) {
            if v > best_val {
                best_val = v;
                log.best_epoch = epoch;
                best = Some(model.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        } else {
            log.best_epoch = epoch;
        }
    }
    if let Some(best) = best {
        *model = best;
    }
    Ok(log)
}

/// One-hot MSE target on `head`.
pub fn hard_target(head: usize, label: usize, classes: usize) -> Result<LossTerm> {
    Ok(LossTerm {
        head,
        target: ProbVector::one_hot(label, classes)?,
        weight: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: Option<usize>,
    pub seed: u64,
}

/// A model trained from random initialization on hard labels.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GruModel,
    pub log: FitLog,
}

pub fn train_classifier(
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    embeddings: Arc<EmbeddingTable>,
    cfg: &TrainConfig,
) -> Result<Trained> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let mut model = init_params(cfg.hidden, embeddings.dim(), train.classes(), cfg.seed, embeddings)?;
    model.heads[0].class_names = train.class_names.clone();
    let examples = hard_examples(&model, train, 0)?;
    let val_set = val.map(|v| EvalSet::new(&model.embeddings, v, 0));
    let mut shuffle = seeded(cfg.seed, Stream::Shuffle);
    let log = fit(
        &mut model,
        &examples,
        &FitConfig { lr: cfg.lr, epochs: cfg.epochs, patience: cfg.patience },
        Monitors { val: val_set.as_ref(), retention: None },
        &mut shuffle,
        &mut |_, _| {},
    )?;
    Ok(Trained { model, log })
}

/// Embeds a dataset for `model` with one-hot targets on `head`.
pub fn hard_examples(model: &GruModel, data: &LabeledDataset, head: usize) -> Result<Vec<TrainExample>> {
    let classes = data.classes();
    data.examples
        .iter()
        .map(|e| {
            Ok(TrainExample {
                inputs: model.embed(&e.tokens),
                terms: vec![hard_target(head, e.label, classes)?],
            })
        })
        .collect()
}
