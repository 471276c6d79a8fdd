//! Writes the synthetic task files, trains a model from a text embedding
//! file, and round-trips the model through its on-disk format.
//!
//! Usage: `cargo run --example model_files [out dir]`

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use stgru::data::{load_dataset, Split};
use stgru::model_io::{load_model, save_model};
use stgru::rules::sentiment_class_names;
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec};
use stgru::train::{evaluate_accuracy, train_classifier, TrainConfig};
use stgru::{load_embeddings, EmbeddingTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "model_files_out".into()));
    std::fs::create_dir_all(&dir)?;

    let pair = generate_synthetic_pair(&SynthTaskSpec::default())?;
    pair.write(&dir)?;
    println!("wrote synthetic pair to {}", dir.display());

    // A text embedding file, one `token v1 … vd` row per token. Tokens not
    // listed fall back to the zero vector.
    let random = EmbeddingTable::random(32, 5)?;
    let mut vocab: Vec<&String> = pair.source.train.examples.iter().flat_map(|e| &e.tokens).collect();
    vocab.sort();
    vocab.dedup();
    let mut text = String::new();
    for token in vocab {
        let values: Vec<String> = random.lookup(token).as_slice().iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(text, "{token} {}", values.join(" "));
    }
    let emb_path = dir.join("embeddings.txt");
    std::fs::write(&emb_path, text)?;
    let embeddings = Arc::new(load_embeddings(emb_path.to_str().expect("utf-8 path"))?);

    let classes = sentiment_class_names();
    let train = load_dataset(dir.join("source_train.tsv"), &classes, Split::Train)?;
    let test = load_dataset(dir.join("source_test.tsv"), &classes, Split::Test)?;
    let cfg = TrainConfig { hidden: 8, lr: 0.1, epochs: 10, patience: None, seed: 1 };
    let model = train_classifier(&train, None, embeddings, &cfg)?.model;

    let model_path = dir.join("source.st");
    save_model(&model, &model_path)?;
    let back = load_model(&model_path)?;
    println!(
        "model saved to {}: test accuracy {:.4} before, {:.4} after reload, parameters identical: {}",
        model_path.display(),
        evaluate_accuracy(&model, 0, &test)?,
        evaluate_accuracy(&back, 0, &test)?,
        back.param_bytes() == model.param_bytes()
    );
    Ok(())
}
