//! Distills the rule engine into a GRU student over an unlabeled synthetic
//! corpus and reports teacher agreement on held-out texts.
//!
//! Usage: `cargo run --release --example rule_distillation [hidden] [examples] [epochs] [seed] [pos/neg tokens] [neutral tokens]`

use std::sync::Arc;
use std::time::Instant;

use stgru::distill::{generate_soft_dataset, teacher_student_agreement, train_student_validated, DistillConfig, Teacher};
use stgru::embedding::DESK_EMBEDDINGS;
use stgru::load_embeddings;
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> stgru::Result<()> {
    let hidden = arg(1, 16);
    let n = arg(2, 5000);
    let epochs = arg(3, 40);
    let seed = arg(4, 0);
    let polar = arg(5, SynthTaskSpec::distillation().positive_tokens);
    let neutral = arg(6, SynthTaskSpec::distillation().neutral_tokens);
    let spec = SynthTaskSpec {
        positive_tokens: polar,
        negative_tokens: polar,
        neutral_tokens: neutral,
        corpus_size: n + 1500,
        ..SynthTaskSpec::distillation()
    };
    let pair = generate_synthetic_pair(&spec)?;
    let (train_texts, rest) = pair.corpus.split_at(n);
    let (held_out, val_texts) = rest.split_at(1000);

    let teacher = Teacher::Rules(pair.target_gazetteer.clone());
    let soft = generate_soft_dataset(&teacher, train_texts, n)?;
    let val = generate_soft_dataset(&teacher, val_texts, val_texts.len())?;
    let embeddings = Arc::new(load_embeddings(DESK_EMBEDDINGS)?);
    let start = Instant::now();
    let mut cfg = DistillConfig::new(hidden, n, 0.1, epochs, seed);
    // Patience equal to the epoch budget: no early stop, best epoch kept.
    cfg.patience = Some(epochs);
    let student = train_student_validated(&cfg, &soft, Some(&val), embeddings)?;
    for e in &student.log.epochs {
        println!("epoch {:>3}  loss {:.5}  validation agreement {:.3}", e.epoch, e.train_loss, e.val_acc.unwrap_or(0.0));
    }
    println!("kept epoch {}", student.log.best_epoch);
    let agreement = teacher_student_agreement(&teacher, &student.model, 0, held_out)?;
    println!(
        "vocabulary {}, hidden {hidden}, {n} soft examples: held-out agreement {:.1}% ({:.1}s)",
        2 * polar + neutral,
        100.0 * agreement,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
