//! Compares scratch training with every transfer method on the default
//! synthetic task pair: target test accuracy and accuracy retained on the
//! source task. α is chosen per method on target validation accuracy.
//!
//! Usage: `cargo run --release --example transfer_comparison [seeds]`

use std::sync::Arc;
use std::time::Instant;

use stgru::embedding::DESK_EMBEDDINGS;
use stgru::runner::{RunConfig, DEFAULT_ALPHA_GRID};
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec};
use stgru::train::{evaluate_accuracy, train_classifier, TrainConfig, DEFAULT_PATIENCE};
use stgru::transfer::{evaluate_retention, transfer_grid_search, Method, TransferConfig, TransferData};
use stgru::load_embeddings;

const HIDDEN: usize = 16;
const LR: f64 = 0.1;
const EPOCHS: usize = 40;

fn main() -> stgru::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let pair = generate_synthetic_pair(&SynthTaskSpec::default())?;
    let embeddings = Arc::new(load_embeddings(DESK_EMBEDDINGS)?);
    let start = Instant::now();

    println!("seed\tmethod\talpha\ttarget_test\tsource_retention");
    for seed in 0..seeds {
        let cfg = TrainConfig { hidden: HIDDEN, lr: LR, epochs: EPOCHS, patience: Some(DEFAULT_PATIENCE), seed };
        let source = train_classifier(&pair.source.train, Some(&pair.source.val), embeddings.clone(), &cfg)?.model;
        let scratch = train_classifier(&pair.target.train, Some(&pair.target.val), embeddings.clone(), &cfg)?.model;
        println!(
            "{seed}\tsource\t-\t-\t{:.4}",
            evaluate_accuracy(&source, 0, &pair.source.test)?
        );
        println!("{seed}\tscratch\t-\t{:.4}\t-", evaluate_accuracy(&scratch, 0, &pair.target.test)?);

        let data = TransferData { train: &pair.target.train, val: Some(&pair.target.val), source_test: None };
        let mut run = RunConfig::new(seed, 1);
        run.lr_grid = vec![LR];
        run.alpha_grid = DEFAULT_ALPHA_GRID.to_vec();
        for method in Method::ALL {
            let mut base = TransferConfig::new(method, 0.0, LR, EPOCHS, seed);
            base.patience = Some(DEFAULT_PATIENCE);
            let grid = transfer_grid_search(&source, data, &base, &run)?;
            let model = &grid.model.model;
            let retention = match evaluate_retention(model, &pair.source.test) {
                Ok(r) => format!("{r:.4}"),
                Err(_) => "n/a".to_string(),
            };
            let alpha = grid.alpha.map_or("-".to_string(), |a| a.to_string());
            println!("{seed}\t{method}\t{alpha}\t{:.4}\t{retention}", evaluate_accuracy(model, 0, &pair.target.test)?);
        }
    }
    eprintln!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
