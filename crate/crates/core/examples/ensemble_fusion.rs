//! Trains a small pool of target models, fuses them greedily into a tree of
//! pairwise gates, reports member and ensemble accuracy, and distills the
//! tree into a single student.
//!
//! Usage: `cargo run --release --example ensemble_fusion [members]`

use std::sync::Arc;

use stgru::distill::{teacher_student_agreement, DistillConfig, Teacher};
use stgru::embedding::DESK_EMBEDDINGS;
use stgru::ensemble::{distill_ensemble, greedy_fuse, GateConfig, Member};
use stgru::load_embeddings;
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec};
use stgru::train::{evaluate_accuracy, train_classifier, TrainConfig};

fn main() -> stgru::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let pair = generate_synthetic_pair(&SynthTaskSpec::default())?;
    let embeddings = Arc::new(load_embeddings(DESK_EMBEDDINGS)?);

    // Different seeds and training lengths give members with different
    // strengths for the gates to weigh.
    let mut members = Vec::new();
    for i in 0..n {
        let cfg = TrainConfig { hidden: 16, lr: 0.1, epochs: 4 + 4 * i as usize, patience: None, seed: 20 + i };
        let model = train_classifier(&pair.target.train, None, embeddings.clone(), &cfg)?.model;
        println!("m{i}: {} epochs, target test {:.4}", cfg.epochs, evaluate_accuracy(&model, 0, &pair.target.test)?);
        members.push(Member::new(model));
    }

    let fusion = greedy_fuse(members, &pair.target.val, &pair.target.train, &GateConfig::default())?;
    for (k, phase) in fusion.phases.iter().enumerate() {
        let cands: Vec<String> = phase.candidates.iter().map(|(c, a)| format!("{c}={a:.4}")).collect();
        println!("phase {k}: anchor {}, candidates [{}], chose {}", phase.anchor, cands.join(", "), phase.chosen);
    }
    let tree = fusion.tree;
    let test = &pair.target.test;
    let correct = test
        .examples
        .iter()
        .filter(|ex| tree.predict_tokens(&ex.tokens).map(|p| p.argmax() == ex.label).unwrap_or(false))
        .count();
    println!("tree {}: target test {:.4}", tree.root.describe(), correct as f64 / test.len() as f64);

    let (train_texts, held_out) = pair.corpus.split_at(5000);
    let student = distill_ensemble(&tree, train_texts, &DistillConfig::new(16, 5000, 0.1, 20, 0), embeddings)?;
    let agreement = teacher_student_agreement(&Teacher::Ensemble(tree), &student.model, 0, held_out)?;
    println!(
        "student: target test {:.4}, agreement with tree on held-out texts {:.4}",
        evaluate_accuracy(&student.model, 0, test)?,
        agreement
    );
    Ok(())
}
