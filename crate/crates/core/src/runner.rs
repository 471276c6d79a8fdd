//! Seeded parallel runs with best-of-N selection, and grid search over
//! learning rate and forgetting weight.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model_io::fmt_f64;
use crate::train::EpochRecord;

pub const DEFAULT_PARALLEL_RUNS: usize = 10;
pub const DEFAULT_LR_GRID: [f64; 4] = [0.3, 0.1, 0.03, 0.01];
pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_parallel: usize,
    pub seeds: Vec<u64>,
    pub patience: Option<usize>,
    pub lr_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
}

impl RunConfig {
    /// `n` consecutive seeds starting at `base_seed`, default grids.
    pub fn new(base_seed: u64, n: usize) -> Self {
        RunConfig {
            n_parallel: n,
            seeds: (0..n as u64).map(|i| base_seed + i).collect(),
            patience: Some(crate::train::DEFAULT_PATIENCE),
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_parallel == 0 {
            return Err(Error::Config("n_parallel must be at least 1".into()));
        }
        if self.seeds.len() < self.n_parallel {
            return Err(Error::Config(format!(
                "{} parallel runs requested but only {} seeds given",
                self.n_parallel,
                self.seeds.len()
            )));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("run seeds must be distinct".into()));
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::new(0, DEFAULT_PARALLEL_RUNS)
    }
}

/// What a single training run reports back.
#[derive(Debug, Clone)]
pub struct RunOutcome<M> {
    pub model: M,
    pub val_acc: f64,
    pub curve: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// `None` when the run failed.
    pub val_acc: Option<f64>,
    pub curve: Vec<EpochRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ParallelResult<M> {
    pub model: M,
    pub best_run: usize,
    pub best_seed: u64,
    pub val_acc: f64,
    pub log: Vec<RunRecord>,
}

/// Index of the best successful record: highest validation accuracy,
/// lowest seed on ties.
pub fn select_best(log: &[RunRecord]) -> Option<usize> {
    log.iter()
        .enumerate()
        .filter_map(|(i, r)| r.val_acc.map(|v| (i, v, r.seed)))
        .fold(None, |best: Option<(usize, f64, u64)>, (i, v, s)| match best {
            Some((_, bv, bs)) if bv > v || (bv == v && bs <= s) => best,
            _ => Some((i, v, s)),
        })
        .map(|(i, _, _)| i)
}

/// Runs `train_fn` once per seed (concurrently) and keeps the model with
/// the highest validation accuracy. Failed runs are logged and skipped.
pub fn run_parallel<M, F>(cfg: &RunConfig, train_fn: F) -> Result<ParallelResult<M>>
where
    M: Send,
    F: Fn(u64) -> Result<RunOutcome<M>> + Sync,
{
    cfg.validate()?;
    let seeds = &cfg.seeds[..cfg.n_parallel];
    let outcomes: Vec<Result<RunOutcome<M>>> = seeds.par_iter().map(|&s| train_fn(s)).collect();

    let mut log = Vec::with_capacity(outcomes.len());
    let mut models = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for (run, (seed, outcome)) in seeds.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(o) => {
                log.push(RunRecord { run, seed: *seed, val_acc: Some(o.val_acc), curve: o.curve, error: None });
                models.push(Some(o.model));
            }
            Err(e) => {
                log::warn!("run {run} (seed {seed}) failed: {e}");
                log.push(RunRecord { run, seed: *seed, val_acc: None, curve: Vec::new(), error: Some(e.to_string()) });
                models.push(None);
                first_error.get_or_insert(e);
            }
        }
    }
    let Some(best) = select_best(&log) else {
        return Err(Error::AllRunsFailed {
            runs: log.len(),
            first: Box::new(first_error.expect("at least one run")),
        });
    };
    Ok(ParallelResult {
        model: models[best].take().expect("successful run has a model"),
        best_run: best,
        best_seed: log[best].seed,
        val_acc: log[best].val_acc.expect("successful run"),
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub lr: f64,
    pub alpha: Option<f64>,
    pub val_acc: Option<f64>,
    pub best_seed: Option<u64>,
    pub runs: Vec<RunRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult<M> {
    pub model: M,
    pub lr: f64,
    pub alpha: Option<f64>,
    pub val_acc: f64,
    pub cells: Vec<GridCell>,
}

/// Evaluates every `(lr, α)` cell with [`run_parallel`] and keeps the best
/// by validation accuracy; ties go to the smaller learning rate, then the
/// smaller α. `alpha_grid = None` collapses the α axis to one cell.
pub fn grid_search<M, F>(lr_grid: &[f64], alpha_grid: Option<&[f64]>, cfg: &RunConfig, cell_fn: F) -> Result<GridResult<M>>
where
    M: Send,
    F: Fn(f64, Option<f64>, u64) -> Result<RunOutcome<M>> + Sync,
{
    if lr_grid.is_empty() || alpha_grid.is_some_and(<[f64]>::is_empty) {
        return Err(Error::Config("grid search needs non-empty grids".into()));
    }
    let alphas: Vec<Option<f64>> = match alpha_grid {
        Some(a) => a.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let cell_keys: Vec<(f64, Option<f64>)> = lr_grid
        .iter()
        .flat_map(|&lr| alphas.iter().map(move |&a| (lr, a)))
        .collect();

    let results: Vec<Result<ParallelResult<M>>> = cell_keys
        .par_iter()
        .map(|&(lr, alpha)| run_parallel(cfg, |seed| cell_fn(lr, alpha, seed)))
        .collect();

    let mut cells = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for ((lr, alpha), r) in cell_keys.into_iter().zip(results) {
        match r {
            Ok(p) => {
                cells.push(GridCell { lr, alpha, val_acc: Some(p.val_acc), best_seed: Some(p.best_seed), runs: p.log, error: None });
                models.push(Some(p.model));
            }
            Err(e) => {
                log::warn!("grid cell lr={lr} alpha={alpha:?} failed: {e}");
                cells.push(GridCell { lr, alpha, val_acc: None, best_seed: None, runs: Vec::new(), error: Some(e.to_string()) });
                models.push(None);
            }
        }
    }
    let best = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.val_acc.map(|v| (i, v)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((bi, bv)) if bv > v || (bv == v && cell_order(&cells[bi], &cells[i]).is_le()) => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Selection("every grid cell failed".into()))?;
    Ok(GridResult {
        model: models[best].take().expect("successful cell"),
        lr: cells[best].lr,
        alpha: cells[best].alpha,
        val_acc: cells[best].val_acc.expect("successful cell"),
        cells,
    })
}

fn cell_order(a: &GridCell, b: &GridCell) -> std::cmp::Ordering {
    a.lr.total_cmp(&b.lr)
        .then(a.alpha.unwrap_or(0.0).total_cmp(&b.alpha.unwrap_or(0.0)))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// TSV run log: `run  epoch  train_loss  val_acc  retention_acc`.
pub fn run_log_tsv(log: &[RunRecord]) -> String {
    let mut out = String::from("run\tepoch\ttrain_loss\tval_acc\tretention_acc\n");
    for r in log {
        for e in &r.curve {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.run,
                e.epoch,
                fmt_f64(e.train_loss),
                opt(e.val_acc),
                opt(e.retention_acc)
            );
        }
    }
    out
}

/// TSV summary of a grid search, one row per cell.
pub fn grid_log_tsv(cells: &[GridCell]) -> String {
    let mut out = String::from("lr\talpha_f\tval_acc\tbest_seed\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            fmt_f64(c.lr),
            opt(c.alpha),
            opt(c.val_acc),
            c.best_seed.map(|s| s.to_string()).unwrap_or_default()
        );
    }
    out
}
