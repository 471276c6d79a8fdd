//! Checks backpropagation through time against central finite differences
//! on a small model with a trainable target head and a frozen source head,
//! the shape used by the forgetting-cost objective.
//!
//! Usage: `cargo run --example gradient_check [instances]`

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgru::numerics::{finite_diff_grad, max_relative_error};
use stgru::rules::sentiment_class_names;
use stgru::{init_params, EmbeddingTable, Head, LossTerm, OutputHead, ProbVector, Vector};

fn main() -> stgru::Result<()> {
    let instances: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    println!("instance\thidden\tinput\tlength\tparams\tmax_rel_err");
    for i in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let (hidden, input, len) = (rng.random_range(2..=8), rng.random_range(2..=12), rng.random_range(1..=6));
        let mut model = init_params(hidden, input, 3, i, Arc::new(EmbeddingTable::random(input, i)?))?;
        let mut source = Head::new("source", sentiment_class_names(), OutputHead::random(3, hidden, &mut rng));
        source.frozen = true;
        model.heads.push(source);

        let inputs: Vec<Vector> =
            (0..len).map(|_| Vector::new((0..input).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        // Hard target on the new head, a soft "what the source said" target
        // on the frozen head weighted by α.
        let soft = ProbVector::new(vec![0.2, 0.5, 0.3])?;
        let terms = vec![
            LossTerm { head: 0, target: ProbVector::one_hot(rng.random_range(0..3), 3)?, weight: 1.0 },
            LossTerm { head: 1, target: soft, weight: 1.5 },
        ];

        let (_, grads) = model.compute_gradients(&inputs, &terms)?;
        let theta = model.trainable_flat();
        let numeric = finite_diff_grad(
            |p: &Vector| {
                let mut m = model.clone();
                m.set_trainable_flat(p)?;
                m.loss(&inputs, &terms)
            },
            &theta,
            1e-5,
        )?;
        let err = max_relative_error(&grads.flatten(), &numeric)?;
        println!("{i}\t{hidden}\t{input}\t{len}\t{}\t{err:.2e}", theta.len());
    }
    Ok(())
}
