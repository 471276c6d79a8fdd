//! Sequential transfer learning for GRU text classifiers.
//!
//! The crate trains a from-scratch single-layer GRU over fixed word
//! embeddings and moves knowledge between tasks with five methods:
//! fine-tuning, progressive networks, learning without forgetting (plain and
//! greedy), and a forgetting-cost regularizer that keeps the network close
//! to the soft outputs of the source model. Around that core sit a
//! lexicon rule engine usable as a distillation teacher, a pairwise gated
//! ensemble with greedy fusion, and the harness needed to run experiments:
//! tokenizer, dataset files, a synthetic task generator, seeded parallel
//! runs and grid search.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod distill;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod gru;
pub mod model_io;
pub mod numerics;
pub mod rng;
pub mod rules;
pub mod runner;
pub mod synth;
pub mod tokenize;
pub mod train;
pub mod transfer;

pub use embedding::{load_embeddings, EmbeddingTable};
pub use error::{Error, Result};
pub use gru::{init_params, GruModel, GruParams, Head, LossTerm, OutputHead};
pub use numerics::{Matrix, ProbVector, Vector};
