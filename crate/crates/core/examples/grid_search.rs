//! Grid search over learning rate and α for the forgetting-cost transfer,
//! with several seeded runs per cell. Prints the per-run log and the
//! per-cell summary as TSV.
//!
//! Usage: `cargo run --release --example grid_search [runs per cell]`

use std::sync::Arc;

use stgru::embedding::DESK_EMBEDDINGS;
use stgru::load_embeddings;
use stgru::runner::{grid_log_tsv, RunConfig};
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec};
use stgru::train::{evaluate_accuracy, train_classifier, TrainConfig, DEFAULT_PATIENCE};
use stgru::transfer::{transfer_grid_search, Method, TransferConfig, TransferData};

fn main() -> stgru::Result<()> {
    env_logger::init();
    let runs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let pair = generate_synthetic_pair(&SynthTaskSpec::default())?;
    let embeddings = Arc::new(load_embeddings(DESK_EMBEDDINGS)?);
    let source_cfg = TrainConfig { hidden: 16, lr: 0.1, epochs: 40, patience: Some(DEFAULT_PATIENCE), seed: 0 };
    let source = train_classifier(&pair.source.train, Some(&pair.source.val), embeddings, &source_cfg)?.model;

    let mut run = RunConfig::new(100, runs);
    run.lr_grid = vec![0.1, 0.03];
    run.alpha_grid = vec![0.5, 1.0, 2.0];
    let mut base = TransferConfig::new(Method::FcRelated, 0.0, 0.1, 15, 0);
    base.patience = Some(DEFAULT_PATIENCE);
    let data = TransferData { train: &pair.target.train, val: Some(&pair.target.val), source_test: Some(&pair.source.test) };
    let grid = transfer_grid_search(&source, data, &base, &run)?;

    print!("{}", grid_log_tsv(&grid.cells));
    println!(
        "selected lr {} alpha {:?}: validation {:.4}, target test {:.4}",
        grid.lr,
        grid.alpha,
        grid.val_acc,
        evaluate_accuracy(&grid.model.model, 0, &pair.target.test)?
    );
    Ok(())
}
