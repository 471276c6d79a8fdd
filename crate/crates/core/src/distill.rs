//! Teacher to student distillation over unlabeled text.
//!
//! A teacher (rule engine, GRU head, or gated ensemble) labels corpus
//! texts with probability vectors; a fresh GRU student regresses onto them
//! with the same MSE loss used everywhere else.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::embedding::EmbeddingTable;
use crate::ensemble::EnsembleTree;
use crate::error::{Error, Result};
use crate::gru::{init_params, GruModel, LossTerm};
use crate::model_io::fmt_f64;
use crate::numerics::{softmax_slice, ProbVector};
use crate::rng::{seeded, Stream};
use crate::rules::{analyze_tokens, counts_to_soft_label, sentiment_class_names, Gazetteer};
use crate::tokenize::{tokenize, TokenSequence};
use crate::train::{fit, EvalSet, FitConfig, FitLog, Monitors, TrainExample};
use crate::data::LabeledDataset;

#[allow(clippy::large_enum_variant)]
pub enum Teacher {
    Rules(Gazetteer),
    Model { model: GruModel, head: usize },
    Ensemble(EnsembleTree),
}

impl Teacher {
    pub fn class_names(&self) -> Vec<String> {
        match self {
            Teacher::Rules(_) => sentiment_class_names(),
            Teacher::Model { model, head } => model.heads[*head].class_names.clone(),
            Teacher::Ensemble(tree) => tree.class_names.clone(),
        }
    }

    pub fn soft_label<S: AsRef<str>>(&self, tokens: &[S]) -> Result<ProbVector> {
        match self {
            Teacher::Rules(g) => Ok(counts_to_soft_label(analyze_tokens(tokens, g))),
            Teacher::Model { model, head } => model.predict_tokens(*head, tokens),
            Teacher::Ensemble(tree) => tree.predict_tokens(tokens),
        }
    }

    /// Argmax of the soft label, lowest index on ties. For the rule engine
    /// this coincides with the count comparison rule.
    pub fn hard_label<S: AsRef<str>>(&self, tokens: &[S]) -> Result<usize> {
        Ok(self.soft_label(tokens)?.argmax())
    }

    /// Short description stored alongside generated datasets.
    pub fn provenance(&self) -> String {
        match self {
            Teacher::Rules(g) => format!("rules({} pos, {} neg)", g.positive().len(), g.negative().len()),
            Teacher::Model { model, head } => format!("model(head {}, hidden {})", model.heads[*head].name, model.hidden_size()),
            Teacher::Ensemble(tree) => format!("ensemble({} members)", tree.members.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftExample {
    pub tokens: TokenSequence,
    pub text: String,
    pub label: ProbVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftDataset {
    pub examples: Vec<SoftExample>,
    pub class_names: Vec<String>,
    pub provenance: String,
}

impl SoftDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `tokens<TAB>text<TAB>p_1…p_C` rows after a `#` header line.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# teacher={}\tclasses={}\n", self.provenance, self.class_names.join(","));
        for ex in &self.examples {
            let probs: Vec<String> = ex.label.as_slice().iter().map(|p| fmt_f64(*p)).collect();
            let _ = writeln!(out, "{}\t{}\t{}", ex.tokens.join(" "), ex.text.replace(['\t', '\n'], " "), probs.join("\t"));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let (provenance, classes) = header
            .strip_prefix("# teacher=")
            .and_then(|rest| rest.split_once("\tclasses="))
            .ok_or_else(|| Error::parse(path, 1, "expected `# teacher=<name>\\tclasses=<list>` header"))?;
        let class_names: Vec<String> = classes.split(',').map(str::to_string).collect();
        let mut examples = Vec::new();
        for (i, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 + class_names.len() {
                return Err(Error::parse(path, i + 1, format!("expected {} columns, found {}", 2 + class_names.len(), cols.len())));
            }
            let probs = cols[2..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::parse(path, i + 1, format!("bad probability {c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let label = ProbVector::new(probs).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            examples.push(SoftExample {
                tokens: cols[0].split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect(),
                text: cols[1].to_string(),
                label,
            });
        }
        Ok(SoftDataset { examples, class_names, provenance: provenance.to_string() })
    }
}

/// Labels the first `n` non-empty corpus texts with the teacher's output.
pub fn generate_soft_dataset<S: AsRef<str>>(teacher: &Teacher, corpus: &[S], n: usize) -> Result<SoftDataset> {
    let mut examples = Vec::with_capacity(n);
    for text in corpus {
        if examples.len() == n {
            break;
        }
        let text = text.as_ref();
        let tokens = tokenize(text);
        if tokens.is_empty() {
            continue;
        }
        let label = teacher.soft_label(&tokens)?;
        examples.push(SoftExample { tokens, text: text.to_string(), label });
    }
    if examples.len() < n {
        return Err(Error::InsufficientData { requested: n, available: examples.len() });
    }
    Ok(SoftDataset { examples, class_names: teacher.class_names(), provenance: teacher.provenance() })
}

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub hidden: usize,
    /// Soft examples to generate; `0` means use the whole dataset given.
    pub num_examples: usize,
    pub temperature: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Early-stopping patience, used only when a validation set is given.
    pub patience: Option<usize>,
}

impl DistillConfig {
    pub fn new(hidden: usize, num_examples: usize, lr: f64, epochs: usize, seed: u64) -> Self {
        DistillConfig { hidden, num_examples, temperature: DEFAULT_TEMPERATURE, lr, epochs, seed, patience: None }
    }
}

/// `softmax(log p / T)`; the identity at `T = 1`.
pub fn apply_temperature(p: &ProbVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if temperature == 1.0 {
        return Ok(p.clone());
    }
    let logits: Vec<f64> = p.as_slice().iter().map(|v| v.ln() / temperature).collect();
    if logits.iter().all(|l| *l == f64::NEG_INFINITY) {
        return Err(Error::Numerical { context: "tempering an all-zero distribution".into() });
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|l| if *l == f64::NEG_INFINITY { f64::NEG_INFINITY } else { l - m }).collect();
    Ok(ProbVector::from_trusted(softmax_slice(&shifted)))
}

#[derive(Debug, Clone)]
pub struct Student {
    pub model: GruModel,
    pub log: FitLog,
}

/// Trains a fresh GRU from `init_params(cfg.hidden, …, cfg.seed)`.
pub fn train_student(cfg: &DistillConfig, data: &SoftDataset, embeddings: Arc<EmbeddingTable>) -> Result<Student> {
    train_student_validated(cfg, data, None, embeddings)
}

/// Like [`train_student`], keeping the epoch whose hard-label agreement
/// with the teacher on `val` is highest when `cfg.patience` is set.
pub fn train_student_validated(
    cfg: &DistillConfig,
    data: &SoftDataset,
    val: Option<&SoftDataset>,
    embeddings: Arc<EmbeddingTable>,
) -> Result<Student> {
    let mut model = init_params(cfg.hidden, embeddings.dim(), data.class_names.len(), cfg.seed, embeddings)?;
    model.heads[0].class_names = data.class_names.clone();
    fit_student(model, cfg, data, val)
}

/// Trains head 0 of an existing model on the soft labels.
pub fn train_student_from(model: GruModel, cfg: &DistillConfig, data: &SoftDataset) -> Result<Student> {
    fit_student(model, cfg, data, None)
}

fn fit_student(mut model: GruModel, cfg: &DistillConfig, data: &SoftDataset, val: Option<&SoftDataset>) -> Result<Student> {
    if data.is_empty() {
        return Err(Error::EmptyInput("soft dataset is empty".into()));
    }
    let classes = model.heads[0].classes();
    let n = if cfg.num_examples == 0 { data.len() } else { cfg.num_examples };
    if n > data.len() {
        return Err(Error::InsufficientData { requested: n, available: data.len() });
    }
    let mut examples = Vec::with_capacity(n);
    for (i, ex) in data.examples.iter().take(n).enumerate() {
        if ex.label.len() != classes {
            return Err(Error::Config(format!("soft label {i} has {} classes but the student has {classes}", ex.label.len())));
        }
        examples.push(TrainExample {
            inputs: model.embed(&ex.tokens),
            terms: vec![LossTerm { head: 0, target: apply_temperature(&ex.label, cfg.temperature)?, weight: 1.0 }],
        });
    }
    let val_set = match val {
        Some(v) if !v.is_empty() => {
            if v.class_names != data.class_names {
                return Err(Error::Config("validation soft labels use different classes".into()));
            }
            Some(EvalSet {
                inputs: v.examples.iter().map(|ex| model.embed(&ex.tokens)).collect(),
                labels: v.examples.iter().map(|ex| ex.label.argmax()).collect(),
                head: 0,
            })
        }
        _ => None,
    };
    let mut shuffle = seeded(cfg.seed, Stream::Shuffle);
    let log = fit(
        &mut model,
        &examples,
        &FitConfig { lr: cfg.lr, epochs: cfg.epochs, patience: cfg.patience },
        Monitors { val: val_set.as_ref(), retention: None },
        &mut shuffle,
        &mut |_, _| {},
    )?;
    Ok(Student { model, log })
}

/// Fraction of texts on which the student's argmax equals the teacher's
/// hard label.
pub fn teacher_student_agreement<S: AsRef<str>>(teacher: &Teacher, student: &GruModel, head: usize, texts: &[S]) -> Result<f64> {
    let mut total = 0usize;
    let mut agree = 0usize;
    for text in texts {
        let tokens = tokenize(text.as_ref());
        if tokens.is_empty() {
            continue;
        }
        total += 1;
        if teacher.hard_label(&tokens)? == student.predict_tokens(head, &tokens)?.argmax() {
            agree += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no non-empty texts to compare on".into()));
    }
    Ok(agree as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentCell {
    pub hidden: usize,
    pub num_examples: usize,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StudentSelection {
    pub model: GruModel,
    pub hidden: usize,
    pub num_examples: usize,
    pub table: Vec<StudentCell>,
}

/// Index of the best cell: highest accuracy, then smaller hidden, then
/// smaller example count.
pub fn best_student_cell(table: &[StudentCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in table.iter().enumerate() {
        let Some(acc) = c.accuracy else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bc = &table[b];
                let bacc = bc.accuracy.unwrap_or(f64::NEG_INFINITY);
                acc > bacc || (acc == bacc && (c.hidden, c.num_examples) < (bc.hidden, bc.num_examples))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Trains one student per `(hidden, num_examples)` pair and keeps the one
/// most accurate on the target task's training data.
pub fn select_student<S: AsRef<str>>(
    grid: &[(usize, usize)],
    base: &DistillConfig,
    teacher: &Teacher,
    corpus: &[S],
    target_train: &LabeledDataset,
    embeddings: Arc<EmbeddingTable>,
) -> Result<StudentSelection> {
    if grid.is_empty() {
        return Err(Error::Config("student grid is empty".into()));
    }
    let max_n = grid.iter().map(|g| g.1).max().unwrap_or(0);
    let usable = corpus.iter().filter(|t| !tokenize(t.as_ref()).is_empty()).count();
    let soft = generate_soft_dataset(teacher, corpus, max_n.min(usable))?;
    let mut table = Vec::new();
    let mut models = Vec::new();
    for &(hidden, n) in grid {
        let cfg = DistillConfig { hidden, num_examples: n, ..base.clone() };
        let outcome = (|| {
            if target_train.class_names != soft.class_names {
                return Err(Error::Config("target task classes differ from the teacher's".into()));
            }
            let student = train_student(&cfg, &soft, embeddings.clone())?;
            let eval = EvalSet::new(&student.model.embeddings, target_train, 0);
            let acc = crate::train::accuracy(&student.model, &eval)?;
            Ok((student.model, acc))
        })();
        match outcome {
            Ok((model, acc)) => {
                table.push(StudentCell { hidden, num_examples: n, accuracy: Some(acc), error: None });
                models.push(Some(model));
            }
            Err(e) => {
                log::warn!("student hidden={hidden} n={n} failed: {e}");
                table.push(StudentCell { hidden, num_examples: n, accuracy: None, error: Some(e.to_string()) });
                models.push(None);
            }
        }
    }
    let best = best_student_cell(&table).ok_or_else(|| Error::Selection("every student configuration failed".into()))?;
    Ok(StudentSelection {
        model: models[best].take().expect("best cell has a model"),
        hidden: table[best].hidden,
        num_examples: table[best].num_examples,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz() -> Gazetteer {
        Gazetteer::from_words(&["good", "great"], &["bad", "awful"], &["not"]).unwrap()
    }

    fn corpus() -> Vec<String> {
        ["good day", "not good", "bad bad good", "", "a great movie", "awful, not bad", "nothing here", "great great"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn rule_teacher_labels_negated_phrase() {
        let d = generate_soft_dataset(&Teacher::Rules(gaz()), &["not good"], 1).unwrap();
        let p = d.examples[0].label.as_slice();
        let (a, b) = (1.0 / (1.0 + 1f64.exp()), 1.0 / (1.0 + (-1f64).exp()));
        assert!((p[0] - a).abs() < 1e-12 && p[1] == 0.0 && (p[2] - b).abs() < 1e-12);
        assert!((p[0] - 0.268941).abs() < 1e-6);
    }

    #[test]
    fn validated_student_keeps_best_epoch() {
        let t = Teacher::Rules(gaz());
        let data = generate_soft_dataset(&t, &corpus(), 7).unwrap();
        let val = generate_soft_dataset(&t, &corpus()[4..], 3).unwrap();
        let emb = Arc::new(EmbeddingTable::random(6, 2).unwrap());
        let mut cfg = DistillConfig::new(4, 0, 0.2, 6, 3);
        cfg.patience = Some(6);
        let s = train_student_validated(&cfg, &data, Some(&val), emb.clone()).unwrap();
        let best = s.log.epochs.iter().filter_map(|e| e.val_acc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.log.epochs[s.log.best_epoch].val_acc, Some(best));
        assert_eq!(teacher_student_agreement(&t, &s.model, 0, &corpus()[4..7]).unwrap(), best);

        let mut other = val.clone();
        other.class_names.reverse();
        assert!(matches!(train_student_validated(&cfg, &data, Some(&other), emb), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_size_rules() {
        let t = Teacher::Rules(gaz());
        assert!(generate_soft_dataset(&t, &corpus(), 0).unwrap().is_empty());
        assert_eq!(generate_soft_dataset(&t, &corpus(), 7).unwrap().len(), 7);
        assert!(matches!(
            generate_soft_dataset(&t, &corpus(), 8),
            Err(Error::InsufficientData { requested: 8, available: 7 })
        ));
    }

    #[test]
    fn model_teacher_labels_are_predictions() {
        let emb = Arc::new(EmbeddingTable::random(4, 1).unwrap());
        let model = init_params(3, 4, 3, 9, emb).unwrap();
        let t = Teacher::Model { model: model.clone(), head: 0 };
        let d = generate_soft_dataset(&t, &corpus(), 5).unwrap();
        for ex in &d.examples {
            assert_eq!(ex.label, model.predict_tokens(0, &ex.tokens).unwrap());
        }
    }

    #[test]
    fn soft_dataset_tsv_round_trip() {
        let d = generate_soft_dataset(&Teacher::Rules(gaz()), &corpus(), 6).unwrap();
        let tsv = d.to_tsv();
        let back = SoftDataset::parse(Path::new("s.tsv"), &tsv).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_tsv(), tsv);
    }

    #[test]
    fn teacher_copy_agrees_completely() {
        let emb = Arc::new(EmbeddingTable::random(4, 1).unwrap());
        let model = init_params(3, 4, 3, 9, emb).unwrap();
        let teacher = Teacher::Model { model: model.clone(), head: 0 };
        let d = generate_soft_dataset(&teacher, &corpus(), 5).unwrap();
        let s = train_student_from(model, &DistillConfig::new(3, 0, 0.1, 0, 1), &d).unwrap();
        assert_eq!(teacher_student_agreement(&teacher, &s.model, 0, &corpus()).unwrap(), 1.0);
    }

    #[test]
    fn uniform_student_agrees_at_class_zero_frequency() {
        let emb = Arc::new(EmbeddingTable::random(4, 1).unwrap());
        let student = init_params(3, 4, 3, 9, emb).unwrap();
        let mut student = student;
        for b in student.params.blocks_mut() {
            b.as_mut_slice().fill(0.0);
        }
        student.heads[0].output.w_yh.as_mut_slice().fill(0.0);
        let teacher = Teacher::Rules(gaz());
        let texts = corpus();
        let nonempty: Vec<&String> = texts.iter().filter(|t| !t.is_empty()).collect();
        let pos = nonempty.iter().filter(|t| teacher.hard_label(&tokenize(t)).unwrap() == 0).count();
        let agree = teacher_student_agreement(&teacher, &student, 0, &texts).unwrap();
        assert_eq!(agree, pos as f64 / nonempty.len() as f64);
    }

    #[test]
    fn students_are_deterministic_and_reject_mismatched_labels() {
        let emb = Arc::new(EmbeddingTable::random(4, 1).unwrap());
        let d = generate_soft_dataset(&Teacher::Rules(gaz()), &corpus(), 7).unwrap();
        let cfg = DistillConfig::new(3, 0, 0.3, 3, 5);
        let a = train_student(&cfg, &d, emb.clone()).unwrap();
        let b = train_student(&cfg, &d, emb.clone()).unwrap();
        assert_eq!(a.model.param_bytes(), b.model.param_bytes());
        let two = init_params(3, 4, 2, 1, emb).unwrap();
        assert!(matches!(train_student_from(two, &cfg, &d), Err(Error::Config(_))));
    }

    #[test]
    fn temperature_one_is_identity() {
        let p = ProbVector::new(vec![0.2, 0.0, 0.8]).unwrap();
        assert_eq!(apply_temperature(&p, 1.0).unwrap(), p);
        let hot = apply_temperature(&p, 2.0).unwrap();
        assert_eq!(hot.as_slice()[1], 0.0);
        assert!(hot.as_slice()[0] > 0.2);
    }

    #[test]
    fn best_cell_tie_breaks() {
        let cell = |hidden, n, acc| StudentCell { hidden, num_examples: n, accuracy: acc, error: None };
        let t = vec![cell(16, 500, Some(0.7)), cell(8, 1000, Some(0.7)), cell(8, 500, Some(0.7)), cell(4, 10, None)];
        assert_eq!(best_student_cell(&t), Some(2));
        let t = vec![cell(4, 10, Some(0.5)), cell(16, 500, Some(0.8))];
        assert_eq!(best_student_cell(&t), Some(1));
        assert_eq!(best_student_cell(&[cell(4, 1, None)]), None);
    }
}
