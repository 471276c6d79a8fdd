//! Seeded generator for a pair of related sentiment tasks.
//!
//! Texts are drawn from a toy vocabulary of positive (`pos00`…), negative
//! (`neg00`…) and neutral (`w000`…) tokens plus a negation token and
//! clause breaks. Both tasks label texts with the rule engine. The source
//! task's gazetteer misses a `shift` fraction of the sentiment tokens, so
//! those tokens read as neutral there, and target labels are additionally
//! flipped to a random other class at rate `noise`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Example, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};
use crate::rules::{analyze_tokens, counts_to_hard_label, sentiment_class_names, Gazetteer};
use crate::tokenize::TokenSequence;

/// Clause breaks the generator emits.
const BREAK_TOKENS: [&str; 2] = [",", "."];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTaskSpec {
    pub positive_tokens: usize,
    pub negative_tokens: usize,
    pub neutral_tokens: usize,
    pub negation_token: String,
    pub min_len: usize,
    pub max_len: usize,
    /// Per-position probability of a sentiment token.
    pub sentiment_rate: f64,
    pub negation_rate: f64,
    pub clause_rate: f64,
    /// Share of sentiment tokens missing from the source gazetteer.
    pub shift: f64,
    /// Probability that a target label is replaced by another class.
    pub noise: f64,
    pub source_sizes: SplitSizes,
    pub target_sizes: SplitSizes,
    /// Unlabeled texts drawn from the target distribution.
    pub corpus_size: usize,
    pub seed: u64,
}

impl Default for SynthTaskSpec {
    fn default() -> Self {
        SynthTaskSpec {
            positive_tokens: 20,
            negative_tokens: 20,
            neutral_tokens: 60,
            negation_token: "not".into(),
            min_len: 3,
            max_len: 12,
            sentiment_rate: 0.2,
            negation_rate: 0.05,
            clause_rate: 0.05,
            shift: 0.3,
            noise: 0.05,
            source_sizes: SplitSizes { train: 2000, val: 500, test: 1000 },
            target_sizes: SplitSizes { train: 1500, val: 400, test: 1000 },
            corpus_size: 6000,
            seed: 7,
        }
    }
}

impl SynthTaskSpec {
    /// Smaller 60-word vocabulary used for the distillation corpus: 5,000
    /// training texts plus 1,000 held out.
    pub fn distillation() -> Self {
        SynthTaskSpec { positive_tokens: 12, negative_tokens: 12, neutral_tokens: 36, ..SynthTaskSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive_tokens + self.negative_tokens == 0 {
            return Err(Error::Config("synthetic task needs at least one sentiment token".into()));
        }
        for (name, v) in [
            ("shift", self.shift),
            ("noise", self.noise),
            ("sentiment_rate", self.sentiment_rate),
            ("negation_rate", self.negation_rate),
            ("clause_rate", self.clause_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.sentiment_rate + self.negation_rate + self.clause_rate > 1.0 {
            return Err(Error::Config("token category rates sum above 1".into()));
        }
        if self.sentiment_rate == 0.0 {
            return Err(Error::Config("sentiment_rate is 0, so no text would carry sentiment".into()));
        }
        if self.neutral_tokens == 0 && self.sentiment_rate + self.negation_rate + self.clause_rate < 1.0 {
            return Err(Error::Config("neutral positions need at least one neutral token".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!("invalid length range {}..={}", self.min_len, self.max_len)));
        }
        if self.negation_token.trim().is_empty() || self.negation_token.contains(char::is_whitespace) {
            return Err(Error::Config("negation token must be a single non-empty word".into()));
        }
        Ok(())
    }

    pub fn positive_vocab(&self) -> Vec<String> {
        (0..self.positive_tokens).map(|i| format!("pos{i:02}")).collect()
    }

    pub fn negative_vocab(&self) -> Vec<String> {
        (0..self.negative_tokens).map(|i| format!("neg{i:02}")).collect()
    }

    pub fn neutral_vocab(&self) -> Vec<String> {
        (0..self.neutral_tokens).map(|i| format!("w{i:03}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPair {
    pub source: Splits,
    pub target: Splits,
    /// Unlabeled texts, space-joined so that tokenizing returns the tokens.
    pub corpus: Vec<String>,
    pub source_gazetteer: Gazetteer,
    pub target_gazetteer: Gazetteer,
    /// Sentiment tokens the source gazetteer lacks.
    pub shifted_tokens: Vec<String>,
}

struct Sampler<'a> {
    spec: &'a SynthTaskSpec,
    sentiment: Vec<String>,
    neutral: Vec<String>,
}

impl Sampler<'_> {
    fn text(&self, rng: &mut ChaCha8Rng) -> TokenSequence {
        let s = self.spec;
        let len = rng.random_range(s.min_len..=s.max_len);
        (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                let pool: &[String] = if u < s.sentiment_rate {
                    &self.sentiment
                } else if u < s.sentiment_rate + s.negation_rate {
                    return s.negation_token.clone();
                } else if u < s.sentiment_rate + s.negation_rate + s.clause_rate {
                    return BREAK_TOKENS[rng.random_range(0..BREAK_TOKENS.len())].to_string();
                } else {
                    &self.neutral
                };
                pool[rng.random_range(0..pool.len())].clone()
            })
            .collect()
    }
}

fn gazetteer(pos: &[String], neg: &[String], negation: &str, drop: &[String]) -> Result<Gazetteer> {
    let keep = |t: &&String| !drop.contains(t);
    Gazetteer::new(
        pos.iter().filter(keep).map(|t| vec![t.clone()]),
        neg.iter().filter(keep).map(|t| vec![t.clone()]),
        [negation.to_string()],
    )
}

fn labeled(
    texts: Vec<TokenSequence>,
    gaz: &Gazetteer,
    split: Split,
    noise: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<LabeledDataset> {
    let classes = sentiment_class_names();
    let mut noise = noise;
    let examples = texts
        .into_iter()
        .map(|tokens| {
            let mut label = counts_to_hard_label(analyze_tokens(&tokens, gaz)).index();
            if let Some((rate, rng)) = noise.as_mut() {
                if rng.random::<f64>() < *rate {
                    label = (label + rng.random_range(1..classes.len())) % classes.len();
                }
            }
            Example { tokens, label }
        })
        .collect();
    LabeledDataset::new(examples, classes, split)
}

/// Builds both tasks and the unlabeled corpus. Everything is a function of
/// `spec` alone.
pub fn generate_synthetic_pair(spec: &SynthTaskSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    let (pos, neg) = (spec.positive_vocab(), spec.negative_vocab());
    let mut rng = seeded(spec.seed, Stream::Synth);
    let mut noise_rng = seeded(spec.seed, Stream::Noise);

    let mut sentiment: Vec<String> = pos.iter().chain(&neg).cloned().collect();
    let mut shuffled = sentiment.clone();
    shuffled.shuffle(&mut rng);
    let n_shift = (spec.shift * sentiment.len() as f64).round() as usize;
    let mut shifted: Vec<String> = shuffled.into_iter().take(n_shift).collect();
    shifted.sort();

    let source_gazetteer = gazetteer(&pos, &neg, &spec.negation_token, &shifted)?;
    let target_gazetteer = gazetteer(&pos, &neg, &spec.negation_token, &[])?;
    sentiment.sort();
    let sampler = Sampler { spec, sentiment, neutral: spec.neutral_vocab() };
    let mut draw = |n: usize| (0..n).map(|_| sampler.text(&mut rng)).collect::<Vec<_>>();

    let (ss, ts) = (spec.source_sizes, spec.target_sizes);
    let source = Splits {
        train: labeled(draw(ss.train), &source_gazetteer, Split::Train, None)?,
        val: labeled(draw(ss.val), &source_gazetteer, Split::Val, None)?,
        test: labeled(draw(ss.test), &source_gazetteer, Split::Test, None)?,
    };
    let target = Splits {
        train: labeled(draw(ts.train), &target_gazetteer, Split::Train, Some((spec.noise, &mut noise_rng)))?,
        val: labeled(draw(ts.val), &target_gazetteer, Split::Val, Some((spec.noise, &mut noise_rng)))?,
        test: labeled(draw(ts.test), &target_gazetteer, Split::Test, Some((spec.noise, &mut noise_rng)))?,
    };
    let corpus = draw(spec.corpus_size).into_iter().map(|t| t.join(" ")).collect();
    Ok(SyntheticPair {
        source,
        target,
        corpus,
        source_gazetteer,
        target_gazetteer,
        shifted_tokens: shifted,
    })
}

/// File names written by [`SyntheticPair::write`].
pub const PAIR_FILES: [&str; 9] = [
    "source_train.tsv",
    "source_val.tsv",
    "source_test.tsv",
    "target_train.tsv",
    "target_val.tsv",
    "target_test.tsv",
    "corpus.txt",
    "source.gaz",
    "target.gaz",
];

impl SyntheticPair {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut corpus = self.corpus.join("\n");
        corpus.push('\n');
        let contents = [
            self.source.train.to_tsv(),
            self.source.val.to_tsv(),
            self.source.test.to_tsv(),
            self.target.train.to_tsv(),
            self.target.val.to_tsv(),
            self.target.test.to_tsv(),
            corpus,
            self.source_gazetteer.to_file_string(),
            self.target_gazetteer.to_file_string(),
        ];
        for (name, body) in PAIR_FILES.iter().zip(contents) {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
