use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use stgru::data::{load_dataset, load_texts, parse_class_names, LabeledDataset, Split};
use stgru::distill::{generate_soft_dataset, train_student, DistillConfig, Teacher};
use stgru::embedding::DESK_EMBEDDINGS;
use stgru::ensemble::{greedy_fuse, EnsembleTree, GateConfig, Member};
use stgru::model_io::{load_model, save_model};
use stgru::rules::{label_texts_tsv, Gazetteer};
use stgru::runner::{run_log_tsv, run_parallel, RunConfig, RunOutcome};
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec};
use stgru::train::{evaluate_accuracy, train_classifier, TrainConfig};
use stgru::transfer::{evaluate_retention, transfer, Method, TransferConfig, TransferData, SOURCE_HEAD, TARGET_HEAD};
use stgru::{load_embeddings, Error, Result};

#[derive(Parser)]
#[command(name = "stgru", version, about = "GRU transfer learning with a forgetting-cost regularizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a GRU classifier from scratch.
    Train(TrainArgs),
    /// Transfer a source model to a target task.
    Transfer(TransferArgs),
    /// Distill a teacher into a GRU student over unlabeled text.
    Distill(DistillArgs),
    /// Gated ensembles.
    #[command(subcommand)]
    Ensemble(EnsembleCommand),
    /// Accuracy of a model head on a labeled dataset.
    Eval(EvalArgs),
    /// Rule engine utilities.
    #[command(subcommand)]
    Rules(RulesCommand),
    /// Write the synthetic source/target task pair.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Parallel runs; the best on validation data is kept.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Early-stopping patience; 0 disables early stopping.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// TSV log of every run's learning curve.
    #[arg(long)]
    log: Option<PathBuf>,
}

impl RunArgs {
    fn run_config(&self) -> RunConfig {
        let mut cfg = RunConfig::new(self.seed, self.runs);
        cfg.patience = (self.patience > 0).then_some(self.patience);
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Comma-separated class names, in label order.
    #[arg(long, default_value = "positive,neutral,negative")]
    classes: String,
    #[arg(long, default_value = DESK_EMBEDDINGS)]
    embeddings: String,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    method: Method,
    /// Source model file.
    #[arg(long)]
    source: PathBuf,
    /// Target training data.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Source-task test data for retention measurement.
    #[arg(long)]
    source_test: Option<PathBuf>,
    #[arg(long, default_value = "positive,neutral,negative")]
    classes: String,
    #[arg(long = "alpha-f", default_value_t = 1.0)]
    alpha_f: f64,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    /// `rules:<gazetteer>`, `model:<file>` or `ensemble:<tree>`.
    #[arg(long)]
    teacher: String,
    /// Unlabeled texts, one per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    /// Corpus texts to label and train on.
    #[arg(long)]
    examples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Student embeddings; defaults to the teacher's, or the desk table for rules.
    #[arg(long)]
    embeddings: Option<String>,
    /// Also write the generated soft dataset.
    #[arg(long)]
    soft_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EnsembleCommand {
    /// Greedily fuse models into a gated tree.
    Fuse(FuseArgs),
}

#[derive(Args)]
struct FuseArgs {
    /// Comma-separated model files.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<PathBuf>,
    /// Labeled data the gates are trained on.
    #[arg(long)]
    validation: PathBuf,
    /// Labeled data used to rank pool members; defaults to the validation data.
    #[arg(long)]
    rank: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Head to evaluate: `target`, `source`, or any head name. Defaults to the first head.
    #[arg(long)]
    head: Option<String>,
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Soft-label texts with the rule engine.
    Label(LabelArgs),
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    gazetteer: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn dataset(path: &Path, classes: &[String], split: Split) -> Result<LabeledDataset> {
    load_dataset(path, classes, split)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let classes = parse_class_names(&a.classes);
    let train = dataset(&a.train, &classes, Split::Train)?;
    let val = a.val.as_deref().map(|p| dataset(p, &classes, Split::Val)).transpose()?;
    let embeddings = Arc::new(load_embeddings(&a.embeddings)?);
    let run = a.run.run_config();
    let result = run_parallel(&run, |seed| {
        let cfg = TrainConfig { hidden: a.hidden, lr: a.run.lr, epochs: a.run.epochs, patience: run.patience, seed };
        let t = train_classifier(&train, val.as_ref(), embeddings.clone(), &cfg)?;
        let val_acc = match &val {
            Some(v) => evaluate_accuracy(&t.model, 0, v)?,
            None => evaluate_accuracy(&t.model, 0, &train)?,
        };
        Ok(RunOutcome { model: t.model, val_acc, curve: t.log.epochs })
    })?;
    save_model(&result.model, &a.out)?;
    if let Some(log) = &a.run.log {
        write(log, &run_log_tsv(&result.log))?;
    }
    println!("best_seed\t{}", result.best_seed);
    println!("{}_accuracy\t{:.6}", if val.is_some() { "val" } else { "train" }, result.val_acc);
    Ok(())
}

fn cmd_transfer(a: TransferArgs) -> Result<()> {
    let source = load_model(&a.source)?;
    let classes = parse_class_names(&a.classes);
    let target = dataset(&a.target, &classes, Split::Train)?;
    let val = a.val.as_deref().map(|p| dataset(p, &classes, Split::Val)).transpose()?;
    let source_classes = source.heads[0].class_names.clone();
    let source_test = a.source_test.as_deref().map(|p| dataset(p, &source_classes, Split::Test)).transpose()?;
    let data = TransferData { train: &target, val: val.as_ref(), source_test: source_test.as_ref() };
    let run = a.run.run_config();
    let result = run_parallel(&run, |seed| {
        let mut cfg = TransferConfig::new(a.method, a.alpha_f, a.run.lr, a.run.epochs, seed);
        cfg.patience = run.patience;
        let r = transfer(&source, data, &cfg)?;
        let val_acc = match r.target_val_accuracy {
            Some(v) => v,
            None => evaluate_accuracy(&r.model, 0, &target)?,
        };
        Ok(RunOutcome { val_acc, curve: r.log.epochs.clone(), model: r })
    })?;
    save_model(&result.model.model, &a.out)?;
    if let Some(log) = &a.run.log {
        write(log, &run_log_tsv(&result.log))?;
    }
    println!("method\t{}", a.method);
    println!("best_seed\t{}", result.best_seed);
    println!("{}_accuracy\t{:.6}", if val.is_some() { "target_val" } else { "target_train" }, result.val_acc);
    if let Some(st) = &source_test {
        match evaluate_retention(&result.model.model, st) {
            Ok(r) => println!("source_retention\t{r:.6}"),
            Err(Error::NotMeasurable(why)) => println!("source_retention\tn/a ({why})"),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn cmd_distill(a: DistillArgs) -> Result<()> {
    let (kind, path) = a
        .teacher
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("teacher must be rules:<file>, model:<file> or ensemble:<file>, got {:?}", a.teacher)))?;
    let teacher = match kind {
        "rules" => Teacher::Rules(Gazetteer::load(path)?),
        "model" => Teacher::Model { model: load_model(path)?, head: 0 },
        "ensemble" => Teacher::Ensemble(EnsembleTree::load(path)?),
        other => return Err(Error::Config(format!("unknown teacher kind {other:?}"))),
    };
    let embeddings = match (&a.embeddings, &teacher) {
        (Some(id), _) => Arc::new(load_embeddings(id)?),
        (None, Teacher::Model { model, .. }) => model.embeddings.clone(),
        (None, Teacher::Ensemble(tree)) => tree.members[0].model.embeddings.clone(),
        (None, Teacher::Rules(_)) => Arc::new(load_embeddings(DESK_EMBEDDINGS)?),
    };
    let corpus = load_texts(&a.corpus)?;
    let soft = generate_soft_dataset(&teacher, &corpus, a.examples)?;
    if let Some(p) = &a.soft_out {
        soft.save(p)?;
    }
    let cfg = DistillConfig::new(a.hidden, a.examples, a.lr, a.epochs, a.seed);
    let student = train_student(&cfg, &soft, embeddings)?;
    save_model(&student.model, &a.out)?;
    let last = student.log.epochs.last().map_or(0.0, |e| e.train_loss);
    println!("examples\t{}", soft.len());
    println!("final_train_loss\t{last:.6e}");
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    let members = a.models.iter().map(Member::load).collect::<Result<Vec<_>>>()?;
    let classes = members
        .first()
        .map(|m| m.class_names().to_vec())
        .ok_or_else(|| Error::Config("no models given".into()))?;
    let gate_data = dataset(&a.validation, &classes, Split::Val)?;
    let rank_data = match &a.rank {
        Some(p) => dataset(p, &classes, Split::Train)?,
        None => gate_data.clone(),
    };
    let fusion = greedy_fuse(members, &gate_data, &rank_data, &GateConfig { lr: a.lr, epochs: a.epochs, seed: a.seed })?;
    fusion.tree.save(&a.out)?;
    for (i, p) in fusion.phases.iter().enumerate() {
        let cands: Vec<String> = p.candidates.iter().map(|(n, acc)| format!("{n}={acc:.4}")).collect();
        println!("phase {}\tanchor {}\tcandidates {}\tchosen {}", i + 1, p.anchor, cands.join(","), p.chosen);
    }
    println!("tree\t{}", fusion.tree.root.describe());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let head = match a.head.as_deref() {
        None => 0,
        Some(name) => model.head_index(name).ok_or_else(|| {
            let hint = if name == SOURCE_HEAD || name == TARGET_HEAD { " (single-head models only have their first head)" } else { "" };
            Error::Config(format!("model has no head {name:?}{hint}"))
        })?,
    };
    let classes = model.heads[head].class_names.clone();
    let data = dataset(&a.dataset, &classes, Split::Test)?;
    println!("accuracy\t{:.6}", evaluate_accuracy(&model, head, &data)?);
    Ok(())
}

fn cmd_label(a: LabelArgs) -> Result<()> {
    let gaz = Gazetteer::load(&a.gazetteer)?;
    let texts = load_texts(&a.input)?;
    write(&a.out, &label_texts_tsv(&texts, &gaz))?;
    println!("labeled\t{}", texts.len());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let pair = generate_synthetic_pair(&SynthTaskSpec { seed: a.seed, ..SynthTaskSpec::default() })?;
    pair.write(&a.out_dir)?;
    println!("shifted_tokens\t{}", pair.shifted_tokens.join(","));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Ensemble(EnsembleCommand::Fuse(a)) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rules(RulesCommand::Label(a)) => cmd_label(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
