//! Runs the lexicon rule engine over a few texts and shows the counts,
//! the hard label and the soft label each one produces.
//!
//! Usage: `cargo run --example rule_teacher [text ...]`

use stgru::rules::{analyze, counts_to_hard_label, counts_to_soft_label, Gazetteer};
use stgru::tokenize::tokenize;

fn main() -> stgru::Result<()> {
    let gaz = Gazetteer::from_words(
        &["good", "great", "love", "well done"],
        &["bad", "awful", "hate", "let down"],
        &["not", "never", "no"],
    )?;
    let mut texts: Vec<String> = std::env::args().skip(1).collect();
    if texts.is_empty() {
        texts = [
            "what a great day",
            "not good at all",
            "I love it, but the ending was awful",
            "never let down by @carol",
            "good good bad",
            "well done!!! not bad",
            "nothing to say",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
    }
    println!("text\ttokens\tpos\tneg\tlabel\tp_pos\tp_neu\tp_neg");
    for text in &texts {
        let counts = analyze(text, &gaz);
        let p = counts_to_soft_label(counts);
        let [pp, pu, pn] = [p.as_slice()[0], p.as_slice()[1], p.as_slice()[2]];
        println!(
            "{text}\t{}\t{}\t{}\t{:?}\t{pp:.6}\t{pu:.6}\t{pn:.6}",
            tokenize(text).join(" "),
            counts.pos,
            counts.neg,
            counts_to_hard_label(counts),
        );
    }
    Ok(())
}
