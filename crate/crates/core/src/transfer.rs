//! Sequential knowledge transfer from a trained source model to a target
//! task.
//!
//! | method           | GRU init | target head            | source head         | extra loss term            |
//! |------------------|----------|------------------------|---------------------|----------------------------|
//! | `finetune`       | source   | source copy or random  | none                | none                       |
//! | `fc_same_output` | source   | source copy            | none                | `α·mse(y_init, ŷ)`         |
//! | `fc_related`     | source   | random                 | frozen copy         | `α·mse(y_init, ŷ_init)`    |
//! | `lwf`            | source   | random                 | trainable copy      | `α·mse(y_init, ŷ_init)`    |
//! | `greedy_lwf`     | source   | random, trained alone first, then as `lwf`                                 |
//! | `progressive`    | random   | random + lateral `U_lat` from the frozen source column | none | none         |
//!
//! `y_init` is the source model's prediction on each target input,
//! computed once before training starts.

use std::fmt;
use std::str::FromStr;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::gru::{init_params, GruModel, Head, LossTerm, OutputHead};
use crate::numerics::{mse_slice, Matrix, ProbVector};
use crate::rng::{seeded, Stream};
use crate::runner::{grid_search, GridResult, RunConfig, RunOutcome};
use crate::train::{accuracy, fit, hard_target, EvalSet, FitConfig, FitLog, Monitors, TrainExample};

pub const TARGET_HEAD: &str = "target";
pub const SOURCE_HEAD: &str = "source";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FineTune,
    FcSameOutput,
    FcRelated,
    Lwf,
    GreedyLwf,
    Progressive,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::FineTune,
        Method::FcSameOutput,
        Method::FcRelated,
        Method::Lwf,
        Method::GreedyLwf,
        Method::Progressive,
    ];

    /// Whether `alpha_f` affects this method.
    pub fn uses_alpha(self) -> bool {
        !matches!(self, Method::FineTune | Method::Progressive)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::FineTune => "finetune",
            Method::FcSameOutput => "fc_same_output",
            Method::FcRelated => "fc_related",
            Method::Lwf => "lwf",
            Method::GreedyLwf => "greedy_lwf",
            Method::Progressive => "progressive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown transfer method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub method: Method,
    pub alpha_f: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub patience: Option<usize>,
    /// Head-only epochs of greedy LwF; defaults to `epochs / 2`.
    pub phase1_epochs: Option<usize>,
    /// Hidden size of the new progressive column; defaults to the source's.
    pub target_hidden: Option<usize>,
    /// Progressive only: pin `U_lat` at zero.
    pub ablate_lateral: bool,
}

impl TransferConfig {
    pub fn new(method: Method, alpha_f: f64, lr: f64, epochs: usize, seed: u64) -> Self {
        TransferConfig {
            method,
            alpha_f,
            lr,
            epochs,
            seed,
            patience: None,
            phase1_epochs: None,
            target_hidden: None,
            ablate_lateral: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha_f >= 0.0) || !self.alpha_f.is_finite() {
            return Err(Error::Config(format!("alpha_f must be a finite non-negative number, got {}", self.alpha_f)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Data available to a transfer run.
#[derive(Debug, Clone, Copy)]
pub struct TransferData<'a> {
    pub train: &'a LabeledDataset,
    pub val: Option<&'a LabeledDataset>,
    /// When present, retention on the source task is logged every epoch.
    pub source_test: Option<&'a LabeledDataset>,
}

impl<'a> TransferData<'a> {
    pub fn train_only(train: &'a LabeledDataset) -> Self {
        TransferData { train, val: None, source_test: None }
    }
}

/// A transfer run ready to train: the initialized model and its examples.
#[derive(Debug, Clone)]
pub struct TransferSetup {
    pub model: GruModel,
    pub examples: Vec<TrainExample>,
    /// Index of the loss term holding the forgetting regularizer.
    pub regularizer_term: Option<usize>,
}

impl TransferSetup {
    /// Per-example `mse(y_init, ·)` of the regularizer under `model`,
    /// unweighted by α.
    pub fn regularizer_values(&self, model: &GruModel) -> Result<Vec<f64>> {
        let Some(term) = self.regularizer_term else {
            return Err(Error::Config("this method has no forgetting regularizer".into()));
        };
        self.examples
            .iter()
            .map(|ex| {
                let t = &ex.terms[term];
                let p = model.predict_inputs(t.head, &ex.inputs)?;
                Ok(mse_slice(t.target.as_slice(), p.as_slice()))
            })
            .collect()
    }

    pub fn mean_regularizer(&self, model: &GruModel) -> Result<f64> {
        let v = self.regularizer_values(model)?;
        Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    pub model: GruModel,
    pub method: Method,
    pub target_val_accuracy: Option<f64>,
    pub source_retention_accuracy: Option<f64>,
    pub log: FitLog,
}

fn same_output_space(source: &GruModel, target: &LabeledDataset) -> bool {
    source.heads[0].class_names == target.class_names
}

fn fresh_head(model: &GruModel, target: &LabeledDataset, seed: u64) -> Head {
    let mut rng = seeded(seed, Stream::HeadInit);
    let out = OutputHead::random(target.classes(), model.hidden_size(), &mut rng);
    Head::new(TARGET_HEAD, target.class_names.clone(), out)
}

/// The source model's first head predicts `y_init`.
fn source_soft_labels(source: &GruModel, inputs: &[Vec<crate::numerics::Vector>]) -> Result<Vec<ProbVector>> {
    inputs.iter().map(|x| source.predict_inputs(0, x)).collect()
}

fn check_source(source: &GruModel, target: &LabeledDataset) -> Result<()> {
    source.validate()?;
    if source.lateral_column.is_some() {
        return Err(Error::Config("a progressive model cannot serve as a transfer source".into()));
    }
    if target.is_empty() {
        return Err(Error::EmptyInput("target training set is empty".into()));
    }
    Ok(())
}

/// Builds the initial model and per-example loss terms for `cfg.method`.
pub fn prepare(source: &GruModel, target: &LabeledDataset, cfg: &TransferConfig) -> Result<TransferSetup> {
    cfg.validate()?;
    check_source(source, target)?;
    let inputs = target.embed(&source.embeddings);
    let classes = target.classes();
    let mut base = source.clone();
    base.gru_frozen = false;

    let (model, regularizer_term, y_init) = match cfg.method {
        Method::FineTune => {
            let head = if same_output_space(source, target) {
                let mut h = source.heads[0].clone();
                h.name = TARGET_HEAD.into();
                h.frozen = false;
                h
            } else {
                fresh_head(source, target, cfg.seed)
            };
            base.heads = vec![head];
            (base, None, None)
        }
        Method::FcSameOutput => {
            if !same_output_space(source, target) {
                return Err(Error::Config(format!(
                    "fc_same_output needs the source output space {:?} to equal the target's {:?}; use fc_related",
                    source.heads[0].class_names, target.class_names
                )));
            }
            let y_init = source_soft_labels(source, &inputs)?;
            let mut h = source.heads[0].clone();
            h.name = TARGET_HEAD.into();
            h.frozen = false;
            base.heads = vec![h];
            (base, Some(1), Some((0, y_init)))
        }
        Method::FcRelated | Method::Lwf | Method::GreedyLwf => {
            let y_init = source_soft_labels(source, &inputs)?;
            let mut src = source.heads[0].clone();
            src.name = SOURCE_HEAD.into();
            src.frozen = cfg.method == Method::FcRelated;
            base.heads = vec![fresh_head(source, target, cfg.seed), src];
            (base, Some(1), Some((1, y_init)))
        }
        Method::Progressive => {
            let hidden = cfg.target_hidden.unwrap_or(source.hidden_size());
            let mut m = init_params(hidden, source.input_size(), classes, cfg.seed, source.embeddings.clone())?;
            m.heads[0].class_names = target.class_names.clone();
            let src_hidden = source.hidden_size();
            let lateral = if cfg.ablate_lateral {
                Matrix::zeros(classes, src_hidden)
            } else {
                let mut rng = seeded(cfg.seed, Stream::LateralInit);
                OutputHead::random(classes, src_hidden, &mut rng).w_yh
            };
            m.heads[0].lateral = Some(lateral);
            m.heads[0].lateral_frozen = cfg.ablate_lateral;
            m.lateral_column = Some(source.params.clone());
            (m, None, None)
        }
    };

    let mut examples = Vec::with_capacity(target.len());
    for (i, (x, ex)) in inputs.into_iter().zip(&target.examples).enumerate() {
        let mut terms = vec![hard_target(0, ex.label, classes)?];
        if let Some((head, soft)) = &y_init {
            terms.push(LossTerm { head: *head, target: soft[i].clone(), weight: cfg.alpha_f });
        }
        examples.push(TrainExample { inputs: x, terms });
    }
    model.validate()?;
    Ok(TransferSetup { model, examples, regularizer_term })
}

/// Head of `model` that predicts in the source task's output space.
fn retention_head(model: &GruModel, source_test: &LabeledDataset) -> Result<usize> {
    if model.lateral_column.is_some() {
        return Err(Error::NotMeasurable("progressive models are excluded from retention measurement".into()));
    }
    if let Some(i) = model.head_index(SOURCE_HEAD) {
        return Ok(i);
    }
    model
        .heads
        .iter()
        .position(|h| h.class_names == source_test.class_names)
        .ok_or_else(|| Error::NotMeasurable("model has no head in the source output space".into()))
}

/// Hard-label accuracy of the shared GRU plus source-space head on the
/// source task's test data.
pub fn evaluate_retention(model: &GruModel, source_test: &LabeledDataset) -> Result<f64> {
    let head = retention_head(model, source_test)?;
    if model.heads[head].classes() != source_test.classes() {
        return Err(Error::NotMeasurable("source head class count differs from the source test set".into()));
    }
    accuracy(model, &EvalSet::new(&model.embeddings, source_test, head))
}

/// Runs `cfg.method` end to end.
pub fn transfer(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer_with_hook(source, data, cfg, &mut |_, _| {})
}

/// [`transfer`], calling `on_step` after every SGD update.
pub fn transfer_with_hook(
    source: &GruModel,
    data: TransferData<'_>,
    cfg: &TransferConfig,
    on_step: &mut dyn FnMut(usize, &GruModel),
) -> Result<TransferResult> {
    let setup = prepare(source, data.train, cfg)?;
    let TransferSetup { mut model, examples, .. } = setup;
    let val = data.val.map(|v| EvalSet::new(&model.embeddings, v, 0));
    let retention = match data.source_test {
        Some(st) => match retention_head(&model, st) {
            Ok(head) => Some(EvalSet::new(&model.embeddings, st, head)),
            Err(Error::NotMeasurable(_)) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let monitors = Monitors { val: val.as_ref(), retention: retention.as_ref() };
    let mut shuffle = seeded(cfg.seed, Stream::Shuffle);
    let fit_cfg = FitConfig { lr: cfg.lr, epochs: cfg.epochs, patience: cfg.patience };

    let log = if cfg.method == Method::GreedyLwf {
        let phase1 = cfg.phase1_epochs.unwrap_or(cfg.epochs / 2);
        let src = model.head_index(SOURCE_HEAD).expect("source head");
        model.gru_frozen = true;
        model.heads[src].frozen = true;
        let mut log1 = fit(&mut model, &examples, &FitConfig { epochs: phase1, ..fit_cfg.clone() }, monitors, &mut shuffle, on_step)?;
        model.gru_frozen = false;
        model.heads[src].frozen = false;
        let offset = log1.steps;
        let log2 = fit(&mut model, &examples, &fit_cfg, monitors, &mut shuffle, &mut |s, m| on_step(offset + s, m))?;
        let shift = log1.epochs.len() - 1;
        log1.steps += log2.steps;
        log1.best_epoch = shift + log2.best_epoch;
        log1.epochs.extend(log2.epochs.into_iter().skip(1).map(|mut e| {
            e.epoch += shift;
            e
        }));
        log1
    } else {
        fit(&mut model, &examples, &fit_cfg, monitors, &mut shuffle, on_step)?
    };

    let target_val_accuracy = match &val {
        Some(v) => Some(accuracy(&model, v)?),
        None => None,
    };
    let source_retention_accuracy = match &retention {
        Some(r) => Some(accuracy(&model, r)?),
        None => None,
    };
    Ok(TransferResult {
        model,
        method: cfg.method,
        target_val_accuracy,
        source_retention_accuracy,
        log,
    })
}

fn with_method(cfg: &TransferConfig, method: Method) -> TransferConfig {
    TransferConfig { method, ..cfg.clone() }
}

pub fn fine_tune(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer(source, data, &with_method(cfg, Method::FineTune))
}

pub fn forgetting_cost_same_output(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer(source, data, &with_method(cfg, Method::FcSameOutput))
}

pub fn forgetting_cost_related(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer(source, data, &with_method(cfg, Method::FcRelated))
}

pub fn lwf(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer(source, data, &with_method(cfg, Method::Lwf))
}

pub fn greedy_lwf(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer(source, data, &with_method(cfg, Method::GreedyLwf))
}

pub fn progressive(source: &GruModel, data: TransferData<'_>, cfg: &TransferConfig) -> Result<TransferResult> {
    transfer(source, data, &with_method(cfg, Method::Progressive))
}

/// Grid search over `run.lr_grid` × `run.alpha_grid` (the α axis collapses
/// for methods without a forgetting term). Every cell trains
/// `run.n_parallel` seeded runs and is scored by target validation
/// accuracy, so `data.val` is required.
pub fn transfer_grid_search(
    source: &GruModel,
    data: TransferData<'_>,
    base: &TransferConfig,
    run: &RunConfig,
) -> Result<GridResult<TransferResult>> {
    if data.val.is_none() {
        return Err(Error::Config("grid search needs target validation data".into()));
    }
    let alphas = base.method.uses_alpha().then_some(run.alpha_grid.as_slice());
    grid_search(&run.lr_grid, alphas, run, |lr, alpha, seed| {
        let cfg = TransferConfig {
            lr,
            alpha_f: alpha.unwrap_or(base.alpha_f),
            seed,
            patience: run.patience,
            ..base.clone()
        };
        let r = transfer(source, data, &cfg)?;
        Ok(RunOutcome {
            val_acc: r.target_val_accuracy.expect("validation data present"),
            curve: r.log.epochs.clone(),
            model: r,
        })
    })
}
