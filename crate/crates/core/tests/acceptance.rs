//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgru::data::{load_dataset, LabeledDataset, Split};
use stgru::distill::{generate_soft_dataset, teacher_student_agreement, train_student_validated, DistillConfig, Teacher};
use stgru::embedding::DESK_EMBEDDINGS;
use stgru::ensemble::{distill_ensemble, gate_forward, greedy_fuse, EnsembleTree, GateConfig, GateParams, Member};
use stgru::gru::{init_params, GruModel, Head, LossTerm, OutputHead};
use stgru::model_io::{load_model, model_to_string, save_model};
use stgru::numerics::{finite_diff_grad, max_relative_error, ProbVector, Vector};
use stgru::rules::{counts_to_hard_label, counts_to_soft_label, sentiment_class_names, SentimentCounts};
use stgru::runner::{RunConfig, DEFAULT_ALPHA_GRID};
use stgru::synth::{generate_synthetic_pair, SynthTaskSpec, SyntheticPair};
use stgru::train::{evaluate_accuracy, train_classifier, TrainConfig, DEFAULT_PATIENCE};
use stgru::transfer::{
    evaluate_retention, prepare, transfer, transfer_grid_search, transfer_with_hook, Method, TransferConfig, TransferData,
    SOURCE_HEAD,
};
use stgru::{load_embeddings, EmbeddingTable};

/// Shared desk-scale protocol.
const HIDDEN: usize = 16;
const LR: f64 = 0.1;
const MAX_EPOCHS: usize = 40;

struct Ctx {
    pair: SyntheticPair,
    embeddings: Arc<EmbeddingTable>,
    /// Briefly trained source model for the structural checks.
    quick_source: GruModel,
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn quick_source(pair: &SyntheticPair, embeddings: &Arc<EmbeddingTable>, seed: u64) -> GruModel {
    let cfg = TrainConfig { hidden: HIDDEN, lr: LR, epochs: 5, patience: None, seed };
    train_classifier(&pair.source.train, None, embeddings.clone(), &cfg).unwrap().model
}

fn random_prob(rng: &mut ChaCha8Rng, c: usize) -> ProbVector {
    let logits: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    ProbVector::new(e.iter().map(|v| v / s).collect()).unwrap()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let instances = 24;
    for i in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let hidden = rng.random_range(1..=8);
        let input = rng.random_range(1..=12);
        let len = rng.random_range(1..=6);
        let emb = Arc::new(EmbeddingTable::random(input, i).unwrap());
        let mut model = init_params(hidden, input, 3, i, emb).unwrap();
        model.heads[0].output.b_y = Vector::new((0..3).map(|_| rng.random_range(-0.5..0.5)).collect());
        let mut source = Head::new(SOURCE_HEAD, sentiment_class_names(), OutputHead::random(3, hidden, &mut rng));
        source.frozen = i % 2 == 0;
        model.heads.push(source);
        let inputs: Vec<Vector> = (0..len).map(|_| Vector::new((0..input).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let alpha = rng.random_range(0.25..4.0);
        let terms = vec![
            LossTerm { head: 0, target: ProbVector::one_hot(rng.random_range(0..3), 3).unwrap(), weight: 1.0 },
            LossTerm { head: 1, target: random_prob(&mut rng, 3), weight: alpha },
        ];
        let (_, grads) = model.compute_gradients(&inputs, &terms).unwrap();
        let analytic = grads.flatten();
        let theta = model.trainable_flat();
        let numeric = finite_diff_grad(
            |p: &Vector| {
                let mut m = model.clone();
                m.set_trainable_flat(p)?;
                m.loss(&inputs, &terms)
            },
            &theta,
            1e-5,
        )
        .unwrap();
        worst = worst.max(max_relative_error(&analytic, &numeric).unwrap());
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("{instances} instances, max relative error {worst:.2e} (< 1e-4), {}", secs(elapsed)),
    )
}

fn criterion_2(ctx: &Ctx) -> Verdict {
    let target = ctx.pair.target.train.take(100);
    let trajectory = |method: Method| {
        let mut snapshots = Vec::new();
        let cfg = TransferConfig::new(method, 0.0, LR, 1, 3);
        transfer_with_hook(&ctx.quick_source, TransferData::train_only(&target), &cfg, &mut |_, m| {
            snapshots.push(m.param_bytes())
        })
        .unwrap();
        snapshots
    };
    let ft = trajectory(Method::FineTune);
    let fc = trajectory(Method::FcSameOutput);
    let first_diff = ft.iter().zip(&fc).position(|(a, b)| a != b);
    let moved = ft.first() != Some(&ctx.quick_source.param_bytes());
    verdict(
        ft.len() == 100 && fc.len() == 100 && first_diff.is_none() && moved,
        format!("{} / {} steps recorded, first differing step: {first_diff:?}", ft.len(), fc.len()),
    )
}

fn criterion_3(ctx: &Ctx) -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for method in [Method::FcSameOutput, Method::FcRelated] {
        let setup = prepare(&ctx.quick_source, &ctx.pair.target.train, &TransferConfig::new(method, 1.0, LR, 1, 0)).unwrap();
        let values = setup.regularizer_values(&setup.model).unwrap();
        let max = values.iter().cloned().fold(0.0, f64::max);
        pass &= values.len() == ctx.pair.target.train.len() && max < 1e-12;
        details.push(format!("{method}: max {max:.1e} over {} examples", values.len()));
    }
    verdict(pass, details.join("; "))
}

fn embedding_bytes(table: &EmbeddingTable, pair: &SyntheticPair) -> Vec<u8> {
    let mut tokens: Vec<&String> = pair.source.train.examples.iter().flat_map(|e| &e.tokens).collect();
    tokens.sort();
    tokens.dedup();
    tokens
        .iter()
        .flat_map(|t| table.lookup(t).iter().flat_map(|v| v.to_bits().to_le_bytes()).collect::<Vec<_>>())
        .collect()
}

fn criterion_4(ctx: &Ctx) -> Verdict {
    let src = &ctx.quick_source;
    let target = ctx.pair.target.train.take(300);
    let emb_before = embedding_bytes(&src.embeddings, &ctx.pair);
    let mut failures = Vec::new();

    let cfg = TransferConfig::new(Method::FcRelated, 1.0, LR, 5, 1);
    let fc = transfer(src, TransferData::train_only(&target), &cfg).unwrap().model;
    let head = fc.head(SOURCE_HEAD).unwrap();
    if !(head.frozen && head.output == src.heads[0].output) {
        failures.push("fc_related source head changed");
    }
    if embedding_bytes(&fc.embeddings, &ctx.pair) != emb_before {
        failures.push("fc_related embeddings changed");
    }

    let cfg = TransferConfig::new(Method::Progressive, 0.0, LR, 5, 1);
    let pr = transfer(src, TransferData::train_only(&target), &cfg).unwrap().model;
    if pr.lateral_column.as_ref() != Some(&src.params) {
        failures.push("progressive source column changed");
    }
    if embedding_bytes(&pr.embeddings, &ctx.pair) != emb_before {
        failures.push("progressive embeddings changed");
    }

    let mut cfg = TransferConfig::new(Method::GreedyLwf, 1.0, LR, 10, 1);
    cfg.phase1_epochs = Some(5);
    let phase1_steps = 5 * target.len();
    let mut after_phase1 = None;
    transfer_with_hook(src, TransferData::train_only(&target), &cfg, &mut |step, m| {
        if step == phase1_steps {
            after_phase1 = Some(m.clone());
        }
    })
    .unwrap();
    match after_phase1 {
        Some(m) => {
            if m.params != src.params || m.head(SOURCE_HEAD).unwrap().output != src.heads[0].output {
                failures.push("greedy_lwf phase 1 touched source parameters");
            }
            if m.heads[0].output == init_params(HIDDEN, src.input_size(), 3, 1, src.embeddings.clone()).unwrap().heads[0].output {
                failures.push("greedy_lwf phase 1 did not train the target head");
            }
            if embedding_bytes(&m.embeddings, &ctx.pair) != emb_before {
                failures.push("greedy_lwf embeddings changed");
            }
        }
        None => failures.push("greedy_lwf phase 1 never completed"),
    }
    let detail = if failures.is_empty() {
        "fc_related source head, progressive source column, greedy LwF phase-1 GRU and source head, and embeddings byte-identical after 5 epochs".to_string()
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let mut problems = Vec::new();
    for pos in 0..=5u32 {
        for neg in 0..=5u32 {
            let c = SentimentCounts::new(pos, neg);
            let p = counts_to_soft_label(c);
            let sum: f64 = p.as_slice().iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                problems.push(format!("({pos},{neg}) sums to {sum}"));
            }
            if p.argmax() != counts_to_hard_label(c).index() {
                problems.push(format!("({pos},{neg}) argmax disagrees"));
            }
        }
    }
    // Independent worked values.
    let e = std::f64::consts::E;
    let worked = [
        ((0, 0), [0.0, 1.0, 0.0]),
        ((1, 0), [e / (e + 1.0), 0.0, 1.0 / (e + 1.0)]),
        ((1, 1), [e / (2.0 * e + e.powi(3)), e.powi(3) / (2.0 * e + e.powi(3)), e / (2.0 * e + e.powi(3))]),
    ];
    let printed = [[0.0, 1.0, 0.0], [0.731059, 0.0, 0.268941], [0.106507, 0.786986, 0.106507]];
    for (((pos, neg), oracle), printed) in worked.iter().zip(printed) {
        let p = counts_to_soft_label(SentimentCounts::new(*pos, *neg));
        for k in 0..3 {
            if (p.as_slice()[k] - oracle[k]).abs() > 1e-12 || (p.as_slice()[k] - printed[k]).abs() > 5e-7 {
                problems.push(format!("({pos},{neg})[{k}] = {}", p.as_slice()[k]));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = problems.is_empty() && elapsed < Duration::from_secs(1);
    let detail = if problems.is_empty() { format!("36 count pairs and 3 worked examples, {:.3}s", elapsed.as_secs_f64()) } else { problems.join("; ") };
    verdict(pass, detail)
}

struct SeedResult {
    scratch: f64,
    finetune: f64,
    fc: f64,
    ret_finetune: f64,
    ret_fc: f64,
    alpha: f64,
}

fn transfer_seed(ctx: &Ctx, seed: u64) -> SeedResult {
    let pair = &ctx.pair;
    let train = |data: &LabeledDataset, val: &LabeledDataset| {
        let cfg = TrainConfig { hidden: HIDDEN, lr: LR, epochs: MAX_EPOCHS, patience: Some(DEFAULT_PATIENCE), seed };
        train_classifier(data, Some(val), ctx.embeddings.clone(), &cfg).unwrap().model
    };
    let source = train(&pair.source.train, &pair.source.val);
    let scratch = train(&pair.target.train, &pair.target.val);
    let data = TransferData { train: &pair.target.train, val: Some(&pair.target.val), source_test: None };
    let mut cfg = TransferConfig::new(Method::FineTune, 0.0, LR, MAX_EPOCHS, seed);
    cfg.patience = Some(DEFAULT_PATIENCE);
    let ft = transfer(&source, data, &cfg).unwrap().model;

    let mut run = RunConfig::new(seed, 1);
    run.lr_grid = vec![LR];
    run.alpha_grid = DEFAULT_ALPHA_GRID.to_vec();
    let grid = transfer_grid_search(&source, data, &TransferConfig { method: Method::FcRelated, ..cfg }, &run).unwrap();
    let fc = grid.model.model;
    let test = &pair.target.test;
    SeedResult {
        scratch: evaluate_accuracy(&scratch, 0, test).unwrap(),
        finetune: evaluate_accuracy(&ft, 0, test).unwrap(),
        fc: evaluate_accuracy(&fc, 0, test).unwrap(),
        ret_finetune: evaluate_retention(&ft, &pair.source.test).unwrap(),
        ret_fc: evaluate_retention(&fc, &pair.source.test).unwrap(),
        alpha: grid.alpha.unwrap(),
    }
}

fn criterion_6(ctx: &Ctx) -> Verdict {
    let start = Instant::now();
    let results: Vec<SeedResult> = (0..5).map(|s| transfer_seed(ctx, s)).collect();
    let mean = |f: fn(&SeedResult) -> f64| 100.0 * results.iter().map(f).sum::<f64>() / results.len() as f64;
    let (scratch, ft, fc) = (mean(|r| r.scratch), mean(|r| r.finetune), mean(|r| r.fc));
    let (ret_ft, ret_fc) = (mean(|r| r.ret_finetune), mean(|r| r.ret_fc));
    let alphas: Vec<String> = results.iter().map(|r| r.alpha.to_string()).collect();
    let elapsed = start.elapsed();
    let a = ret_fc >= ret_ft + 2.0;
    let b = fc >= ft - 1.0;
    let both_beat_scratch = ft > scratch && fc > scratch;
    verdict(
        a && b && both_beat_scratch && elapsed < Duration::from_secs(600),
        format!(
            "retention fc_related {ret_fc:.2} vs fine-tune {ret_ft:.2} [{}]; target test fc_related {fc:.2} vs fine-tune {ft:.2} [{}]; scratch {scratch:.2} [{}]; selected alpha {}; {}",
            if a { "ok" } else { "short" },
            if b { "ok" } else { "short" },
            if both_beat_scratch { "ok" } else { "short" },
            alphas.join(","),
            secs(elapsed)
        ),
    )
}

fn criterion_7(ctx: &Ctx) -> Verdict {
    let start = Instant::now();
    let pair = generate_synthetic_pair(&SynthTaskSpec { corpus_size: 6500, ..SynthTaskSpec::distillation() }).unwrap();
    let (train_texts, rest) = pair.corpus.split_at(5000);
    let (held_out, val_texts) = rest.split_at(1000);
    let teacher = Teacher::Rules(pair.target_gazetteer.clone());
    let soft = generate_soft_dataset(&teacher, train_texts, 5000).unwrap();
    let val = generate_soft_dataset(&teacher, val_texts, val_texts.len()).unwrap();
    let agreements: Vec<f64> = (0..5)
        .map(|seed| {
            let mut cfg = DistillConfig::new(HIDDEN, 5000, LR, MAX_EPOCHS, seed);
            cfg.patience = Some(MAX_EPOCHS);
            let student = train_student_validated(&cfg, &soft, Some(&val), ctx.embeddings.clone()).unwrap();
            100.0 * teacher_student_agreement(&teacher, &student.model, 0, held_out).unwrap()
        })
        .collect();
    let mean = agreements.iter().sum::<f64>() / agreements.len() as f64;
    let shown: Vec<String> = agreements.iter().map(|a| format!("{a:.1}")).collect();
    let elapsed = start.elapsed();
    verdict(
        mean >= 90.0 && elapsed < Duration::from_secs(300),
        format!(
            "hidden {HIDDEN}, 5000 soft labels, 60-word vocabulary: mean held-out agreement {mean:.2}% (>= 90) over 5 seeds [{}], {}",
            shown.join(", "),
            secs(elapsed)
        ),
    )
}

fn criterion_8(ctx: &Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut gate_violations = 0;
    for _ in 0..10_000 {
        let c = rng.random_range(2..=5);
        let w = |rng: &mut ChaCha8Rng| Vector::new((0..c).map(|_| rng.random_range(-6.0..6.0)).collect());
        let g = GateParams { w_a: w(&mut rng), b_a: rng.random_range(-3.0..3.0), w_b: w(&mut rng), b_b: rng.random_range(-3.0..3.0) };
        let (ya, yb) = (random_prob(&mut rng, c), random_prob(&mut rng, c));
        let out = gate_forward(&g, &ya, &yb).unwrap();
        let ok = out.a_a + out.a_b == 1.0
            && out.a_a > 0.0
            && out.a_a < 1.0
            && out.a_b > 0.0
            && out.a_b < 1.0
            && ProbVector::new(out.y.as_slice().to_vec()).is_ok();
        if !ok {
            gate_violations += 1;
        }
    }

    let pair = &ctx.pair;
    let members: Vec<Member> = (0..3)
        .map(|s| {
            let cfg = TrainConfig { hidden: HIDDEN, lr: LR, epochs: 5 + 3 * s as usize, patience: None, seed: 20 + s };
            Member::new(train_classifier(&pair.target.train, None, ctx.embeddings.clone(), &cfg).unwrap().model)
        })
        .collect();
    let before: Vec<Vec<u8>> = members.iter().map(|m| m.model.param_bytes()).collect();
    let gate_cfg = GateConfig::default();
    let fuse = || greedy_fuse(members.clone(), &pair.target.val, &pair.target.train, &gate_cfg).unwrap();
    let (f1, f2) = (fuse(), fuse());
    let unmutated = members.iter().zip(&before).all(|(m, b)| &m.model.param_bytes() == b)
        && f1.tree.members.iter().zip(&before).all(|(m, b)| &m.model.param_bytes() == b);
    let held_out = &pair.corpus[5000..6000];
    let tree_bits = |t: &EnsembleTree| {
        held_out
            .iter()
            .flat_map(|s| t.predict_tokens(&stgru::tokenize::tokenize(s)).unwrap().as_slice().to_vec())
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    let deterministic = f1.tree.root == f2.tree.root && tree_bits(&f1.tree) == tree_bits(&f1.tree) && tree_bits(&f1.tree) == tree_bits(&f2.tree);

    let cfg = DistillConfig::new(HIDDEN, 5000, LR, 20, 0);
    let student = distill_ensemble(&f1.tree, &pair.corpus[..5000], &cfg, ctx.embeddings.clone()).unwrap();
    let teacher = Teacher::Ensemble(f1.tree.clone());
    let agreement = 100.0 * teacher_student_agreement(&teacher, &student.model, 0, held_out).unwrap();

    verdict(
        gate_violations == 0 && unmutated && deterministic && agreement >= 85.0,
        format!(
            "10000 gate evaluations, {gate_violations} violations; members unmutated: {unmutated}; deterministic: {deterministic}; tree {}; student agreement {agreement:.2}% (>= 85)",
            f1.tree.root.describe()
        ),
    )
}

fn criterion_9(ctx: &Ctx) -> Verdict {
    let alphas = [0.0, 0.5, 1.0, 2.0, 4.0];
    let target = ctx.pair.target.train.take(500);
    let seeds = 3u64;
    let mut means = vec![0.0; alphas.len()];
    for seed in 0..seeds {
        let source = quick_source(&ctx.pair, &ctx.embeddings, 100 + seed);
        for (k, &alpha) in alphas.iter().enumerate() {
            let cfg = TransferConfig::new(Method::FcSameOutput, alpha, LR, 20, seed);
            let setup = prepare(&source, &target, &cfg).unwrap();
            let trained = transfer(&source, TransferData::train_only(&target), &cfg).unwrap().model;
            means[k] += setup.mean_regularizer(&trained).unwrap() / seeds as f64;
        }
    }
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = alphas.iter().zip(&means).map(|(a, m)| format!("{a}:{m:.5}")).collect();
    verdict(monotone, format!("mean mse(y_init, y_hat) by alpha {}", shown.join(" ")))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn cli(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_stgru")).args(args).current_dir(dir).output().unwrap();
    assert!(out.status.success(), "stgru {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// Runs the whole command-line pipeline in `dir` and returns every
/// artifact and stdout in order.
fn cli_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--seed", "7", "--out-dir", "d"],
        vec!["train", "--train", "d/source_train.tsv", "--val", "d/source_val.tsv", "--runs", "2", "--epochs", "2", "--out", "src.st", "--log", "src.log"],
        vec![
            "transfer", "--method", "fc_related", "--source", "src.st", "--target", "d/target_train.tsv", "--val", "d/target_val.tsv",
            "--source-test", "d/source_test.tsv", "--alpha-f", "0.5", "--runs", "2", "--epochs", "2", "--out", "fc.st", "--log", "fc.log",
        ],
        vec!["eval", "--model", "fc.st", "--dataset", "d/source_test.tsv", "--head", "source"],
        vec!["rules", "label", "--gazetteer", "d/target.gaz", "--in", "d/corpus.txt", "--out", "labels.tsv"],
        vec!["distill", "--teacher", "rules:d/target.gaz", "--corpus", "d/corpus.txt", "--examples", "300", "--epochs", "2", "--soft-out", "soft.tsv", "--out", "student.st"],
        vec!["ensemble", "fuse", "--models", "src.st,fc.st,student.st", "--validation", "d/target_val.tsv", "--out", "e.tree"],
        vec!["distill", "--teacher", "ensemble:e.tree", "--corpus", "d/corpus.txt", "--examples", "200", "--epochs", "1", "--out", "es.st"],
    ];
    let mut artifacts = Vec::new();
    for (i, args) in steps.iter().enumerate() {
        artifacts.push((format!("stdout {i}"), cli(dir, args)));
    }
    for f in ["src.st", "src.log", "fc.st", "fc.log", "labels.tsv", "soft.tsv", "student.st", "e.tree", "es.st"] {
        artifacts.push((f.to_string(), read(&dir.join(f))));
    }
    for f in stgru::synth::PAIR_FILES {
        artifacts.push((format!("d/{f}"), read(&dir.join("d").join(f))));
    }
    artifacts
}

fn criterion_10(ctx: &Ctx) -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();

    let target = ctx.pair.target.train.take(50);
    let pr = transfer(&ctx.quick_source, TransferData::train_only(&target), &TransferConfig::new(Method::Progressive, 0.0, LR, 1, 0)).unwrap().model;
    let fc = transfer(&ctx.quick_source, TransferData::train_only(&target), &TransferConfig::new(Method::FcRelated, 1.0, LR, 1, 0)).unwrap().model;
    for (name, model) in [("source", &ctx.quick_source), ("progressive", &pr), ("fc_related", &fc)] {
        let p = tmp.path().join(format!("{name}.st"));
        save_model(model, &p).unwrap();
        let first = read(&p);
        let back = load_model(&p).unwrap();
        save_model(&back, &p).unwrap();
        if read(&p) != first || back.param_bytes() != model.param_bytes() || model_to_string(&back).as_bytes() != first {
            failures.push(format!("{name} model round trip"));
        }
    }

    let members = ["source", "fc_related"]
        .iter()
        .map(|n| Member::load(tmp.path().join(format!("{n}.st"))).unwrap())
        .collect::<Vec<_>>();
    let fusion = greedy_fuse(members, &ctx.pair.target.val.take(60), &ctx.pair.target.val.take(60), &GateConfig::default()).unwrap();
    let tree_path = tmp.path().join("e.tree");
    fusion.tree.save(&tree_path).unwrap();
    let first = read(&tree_path);
    EnsembleTree::load(&tree_path).unwrap().save(&tree_path).unwrap();
    if read(&tree_path) != first {
        failures.push("tree round trip".into());
    }

    let data_path = tmp.path().join("target_test.tsv");
    ctx.pair.target.test.save(&data_path).unwrap();
    let first = read(&data_path);
    let back = load_dataset(&data_path, &sentiment_class_names(), Split::Test).unwrap();
    back.save(&data_path).unwrap();
    if read(&data_path) != first || back != ctx.pair.target.test {
        failures.push("dataset round trip".into());
    }

    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let (ra, rb) = (cli_pipeline(&a), cli_pipeline(&b));
    for ((name, x), (_, y)) in ra.iter().zip(&rb) {
        if x != y {
            failures.push(format!("CLI artifact {name} differs between runs"));
        }
    }
    let detail = if failures.is_empty() {
        format!("3 models, 1 tree, 1 dataset round-trip byte-identical; {} CLI artifacts byte-identical across two runs", ra.len())
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

fn main() -> ExitCode {
    let total = Instant::now();
    let pair = generate_synthetic_pair(&SynthTaskSpec::default()).expect("default synthetic pair");
    let embeddings = Arc::new(load_embeddings(DESK_EMBEDDINGS).expect("desk embeddings"));
    let quick = quick_source(&pair, &embeddings, 0);
    let ctx = Ctx { pair, embeddings, quick_source: quick };

    type Check = Box<dyn Fn(&Ctx) -> Verdict>;
    let criteria: Vec<(&str, Check)> = vec![
        ("gradient correctness", Box::new(|_| criterion_1())),
        ("degeneracy equivalence", Box::new(criterion_2)),
        ("zero forgetting at init", Box::new(criterion_3)),
        ("freezing", Box::new(criterion_4)),
        ("count-to-label oracle", Box::new(|_| criterion_5())),
        ("directional transfer", Box::new(criterion_6)),
        ("distillation fidelity", Box::new(criterion_7)),
        ("ensemble properties", Box::new(criterion_8)),
        ("monotone pull", Box::new(criterion_9)),
        ("round trip and determinism", Box::new(criterion_10)),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        ran += 1;
        let v = catch_unwind(AssertUnwindSafe(|| check(&ctx))).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} | {name} | {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{}/{ran} criteria passed in {}", ran - failed, secs(total.elapsed()));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
