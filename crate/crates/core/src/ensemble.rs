//! Pairwise gated ensembles and greedy fusion.
//!
//! A gate mixes two members' probability vectors with scalar weights:
//!
//! ```text
//! m_A = σ(w_A · ŷ_A + b_A)      m_B = σ(w_B · ŷ_B + b_B)
//! a_A = m_A / (m_A + m_B)       a_B = 1 − a_A
//! ŷ   = a_A ŷ_A + a_B ŷ_B
//! ```
//!
//! Gates nest into a binary tree whose leaves are frozen member models.
//!
//! Tree files look like
//!
//! ```text
//! sttree 1
//! classes positive,neutral,negative
//! members 2
//! member 0 head=0 path=models/a.st
//! member 1 head=0 path=models/b.st
//! gate
//!   w_a 0 0 0
//!   b_a 0
//!   w_b 0 0 0
//!   b_b 0
//!   leaf 0
//!   leaf 1
//! ```
//!
//! Members are stored by path; relative paths that do not resolve from
//! the working directory are tried relative to the tree file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::distill::{generate_soft_dataset, train_student, DistillConfig, Student, Teacher};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gru::GruModel;
use crate::model_io::{fmt_f64, load_model, Lines};
use crate::numerics::{mse_slice, sigmoid, ProbVector, Vector};
use crate::rng::{seeded, Stream};

pub const TREE_HEADER: &str = "sttree 1";

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_a: Vector,
    pub b_a: f64,
    pub w_b: Vector,
    pub b_b: f64,
}

impl GateParams {
    /// Uniform mixing.
    pub fn zeros(classes: usize) -> Self {
        GateParams { w_a: Vector::zeros(classes), b_a: 0.0, w_b: Vector::zeros(classes), b_b: 0.0 }
    }

    pub fn classes(&self) -> usize {
        self.w_a.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w_a.is_finite() && self.w_b.is_finite() && self.b_a.is_finite() && self.b_b.is_finite()
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.w_a.as_slice().to_vec();
        v.push(self.b_a);
        v.extend_from_slice(self.w_b.as_slice());
        v.push(self.b_b);
        v
    }

    fn from_flat(classes: usize, v: &[f64]) -> Self {
        GateParams {
            w_a: Vector::new(v[..classes].to_vec()),
            b_a: v[classes],
            w_b: Vector::new(v[classes + 1..2 * classes + 1].to_vec()),
            b_b: v[2 * classes + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutput {
    pub m_a: f64,
    pub m_b: f64,
    pub a_a: f64,
    pub a_b: f64,
    pub y: ProbVector,
}

/// Mixes two predictions.
///
/// `a_a` and `a_b` lie strictly inside (0, 1) unless a pre-activation is
/// so extreme that its sigmoid rounds to exactly 0 or 1.
pub fn gate_forward(g: &GateParams, y_a: &ProbVector, y_b: &ProbVector) -> Result<GateOutput> {
    let c = g.classes();
    if g.w_b.len() != c {
        return Err(Error::dim("gate w_b", c, g.w_b.len()));
    }
    if y_a.len() != c {
        return Err(Error::dim("gate input A", c, y_a.len()));
    }
    if y_b.len() != c {
        return Err(Error::dim("gate input B", c, y_b.len()));
    }
    let m_a = sigmoid(g.w_a.dot(y_a.as_vector())? + g.b_a);
    let m_b = sigmoid(g.w_b.dot(y_b.as_vector())? + g.b_b);
    let a_a = m_a / (m_a + m_b);
    let a_b = 1.0 - a_a;
    let y: Vec<f64> = y_a.as_slice().iter().zip(y_b.as_slice()).map(|(p, q)| a_a * p + a_b * q).collect();
    let y = ProbVector::new(y).map_err(|_| Error::Numerical { context: "gate output is not a distribution".into() })?;
    Ok(GateOutput { m_a, m_b, a_a, a_b, y })
}

/// `mse(target, ŷ)` and its gradient with respect to the gate parameters.
pub fn gate_loss_and_grad(g: &GateParams, y_a: &ProbVector, y_b: &ProbVector, target: &ProbVector) -> Result<(f64, GateParams)> {
    let out = gate_forward(g, y_a, y_b)?;
    if target.len() != g.classes() {
        return Err(Error::dim("gate target", g.classes(), target.len()));
    }
    let c = g.classes() as f64;
    let grad_y: Vec<f64> = out.y.as_slice().iter().zip(target.as_slice()).map(|(p, t)| 2.0 * (p - t) / c).collect();
    let ga: f64 = grad_y.iter().zip(y_a.as_slice()).map(|(g, p)| g * p).sum();
    let gb: f64 = grad_y.iter().zip(y_b.as_slice()).map(|(g, p)| g * p).sum();
    let s = out.m_a + out.m_b;
    let d_ma = out.m_b / (s * s) * (ga - gb);
    let d_mb = out.m_a / (s * s) * (gb - ga);
    let d_pre_a = d_ma * out.m_a * (1.0 - out.m_a);
    let d_pre_b = d_mb * out.m_b * (1.0 - out.m_b);
    let grads = GateParams {
        w_a: y_a.as_vector().scale(d_pre_a),
        b_a: d_pre_a,
        w_b: y_b.as_vector().scale(d_pre_b),
        b_b: d_pre_b,
    };
    Ok((mse_slice(target.as_slice(), out.y.as_slice()), grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig { lr: 0.5, epochs: 10, seed: 0 }
    }
}

/// Per-example SGD on `mse(one_hot(label), ŷ)` from a zero gate, using
/// cached member predictions.
pub fn train_gate_on_predictions(
    preds_a: &[ProbVector],
    preds_b: &[ProbVector],
    labels: &[usize],
    classes: usize,
    cfg: &GateConfig,
) -> Result<GateParams> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(Error::dim("gate training predictions", labels.len(), preds_a.len().min(preds_b.len())));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("gate training data is empty".into()));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("gate learning rate must be positive, got {}", cfg.lr)));
    }
    let targets = labels.iter().map(|&l| ProbVector::one_hot(l, classes)).collect::<Result<Vec<_>>>()?;
    let mut gate = GateParams::zeros(classes);
    let mut rng = seeded(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (_, grad) = gate_loss_and_grad(&gate, &preds_a[i], &preds_b[i], &targets[i])?;
            let updated: Vec<f64> = gate.flat().iter().zip(grad.flat()).map(|(p, g)| p - cfg.lr * g).collect();
            gate = GateParams::from_flat(classes, &updated);
        }
        if !gate.is_finite() {
            return Err(Error::Numerical { context: "gate parameters diverged".into() });
        }
    }
    Ok(gate)
}

/// A frozen member model and the head whose output it contributes.
#[derive(Debug, Clone)]
pub struct Member {
    pub model: Arc<GruModel>,
    pub head: usize,
    /// File the member was loaded from; required to save a tree.
    pub path: Option<PathBuf>,
}

impl Member {
    pub fn new(model: GruModel) -> Self {
        Member { model: Arc::new(model), head: 0, path: None }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Member { model: Arc::new(load_model(path)?), head: 0, path: Some(path.to_path_buf()) })
    }

    pub fn class_names(&self) -> &[String] {
        &self.model.heads[self.head].class_names
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Result<ProbVector> {
        self.model.predict_tokens(self.head, tokens)
    }

    fn predict_dataset(&self, data: &LabeledDataset) -> Result<Vec<ProbVector>> {
        data.examples.iter().map(|e| self.predict(&e.tokens)).collect()
    }
}

/// Trains a gate between two members on labeled data. The members are
/// only read.
pub fn train_gate(a: &Member, b: &Member, data: &LabeledDataset, cfg: &GateConfig) -> Result<GateParams> {
    let pa = a.predict_dataset(data)?;
    let pb = b.predict_dataset(data)?;
    train_gate_on_predictions(&pa, &pb, &data.labels(), data.classes(), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(usize),
    Gate { gate: GateParams, a: Box<Node>, b: Box<Node> },
}

impl Node {
    /// Compact description such as `(m0|(m1|m2))`.
    pub fn describe(&self) -> String {
        match self {
            Node::Leaf(i) => format!("m{i}"),
            Node::Gate { a, b, .. } => format!("({}|{})", a.describe(), b.describe()),
        }
    }

    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            Node::Leaf(i) => out.push(*i),
            Node::Gate { a, b, .. } => {
                a.leaves(out);
                b.leaves(out);
            }
        }
    }

    fn eval(&self, leaf_preds: &[ProbVector]) -> Result<ProbVector> {
        match self {
            Node::Leaf(i) => Ok(leaf_preds[*i].clone()),
            Node::Gate { gate, a, b } => Ok(gate_forward(gate, &a.eval(leaf_preds)?, &b.eval(leaf_preds)?)?.y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleTree {
    pub members: Vec<Member>,
    pub root: Node,
    pub class_names: Vec<String>,
}

impl EnsembleTree {
    pub fn new(members: Vec<Member>, root: Node) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::Config("an ensemble needs at least one member".into()))?;
        let class_names = first.class_names().to_vec();
        for (i, m) in members.iter().enumerate() {
            if m.head >= m.model.heads.len() {
                return Err(Error::Config(format!("member {i} has no head {}", m.head)));
            }
            if m.class_names().len() != class_names.len() {
                return Err(Error::dim(format!("classes of member {i}"), class_names.len(), m.class_names().len()));
            }
        }
        let mut leaves = Vec::new();
        root.leaves(&mut leaves);
        if let Some(bad) = leaves.iter().find(|&&l| l >= members.len()) {
            return Err(Error::Config(format!("leaf references member {bad} of {}", members.len())));
        }
        Ok(EnsembleTree { members, root, class_names })
    }

    pub fn predict_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<ProbVector> {
        let preds = self.members.iter().map(|m| m.predict(tokens)).collect::<Result<Vec<_>>>()?;
        self.root.eval(&preds)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "{TREE_HEADER}");
        let _ = writeln!(out, "classes {}", self.class_names.join(","));
        let _ = writeln!(out, "members {}", self.members.len());
        for (i, m) in self.members.iter().enumerate() {
            let path = m
                .path
                .as_ref()
                .ok_or_else(|| Error::Config(format!("member {i} has no file path; save its model first")))?;
            let path = path.to_str().ok_or_else(|| Error::Config(format!("member {i} path is not UTF-8")))?;
            if path.contains('\n') {
                return Err(Error::Config(format!("member {i} path contains a newline")));
            }
            let _ = writeln!(out, "member {i} head={} path={path}", m.head);
        }
        write_node(&mut out, &self.root, 0);
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a tree and its member models.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::load_with(path, |member| {
            let resolved = if member.is_relative() && !member.exists() { base.join(member) } else { member.to_path_buf() };
            load_model(resolved)
        })
    }

    /// Loads a tree, obtaining each member model from `resolve`.
    pub fn load_with<F>(path: impl AsRef<Path>, resolve: F) -> Result<Self>
    where
        F: FnMut(&Path) -> Result<GruModel>,
    {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        tree_from_str(path, &text, resolve)
    }
}

fn write_node(out: &mut String, node: &Node, depth: usize) {
    let pad = "  ".repeat(depth);
    match node {
        Node::Leaf(i) => {
            let _ = writeln!(out, "{pad}leaf {i}");
        }
        Node::Gate { gate, a, b } => {
            let join = |v: &Vector| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "{pad}gate");
            let _ = writeln!(out, "{pad}  w_a {}", join(&gate.w_a));
            let _ = writeln!(out, "{pad}  b_a {}", fmt_f64(gate.b_a));
            let _ = writeln!(out, "{pad}  w_b {}", join(&gate.w_b));
            let _ = writeln!(out, "{pad}  b_b {}", fmt_f64(gate.b_b));
            write_node(out, a, depth + 1);
            write_node(out, b, depth + 1);
        }
    }
}

fn keyed<'a>(lines: &mut Lines<'a>, key: &str) -> Result<&'a str> {
    let line = lines.expect(key)?.trim_start();
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok(rest),
        _ => Err(lines.err(format!("expected `{key} …`, found {line:?}"))),
    }
}

fn parse_values(lines: &Lines, s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v = s.split(' ').map(|x| lines.parse_f64(x)).collect::<Result<Vec<_>>>()?;
    if v.len() != n {
        return Err(lines.err(format!("{what}: expected {n} values, found {}", v.len())));
    }
    Ok(v)
}

fn parse_node(lines: &mut Lines, classes: usize, depth: usize) -> Result<Node> {
    if depth > 10_000 {
        return Err(lines.err("tree is too deep"));
    }
    let line = lines.expect("gate or leaf")?.trim_start();
    if let Some(i) = line.strip_prefix("leaf ") {
        return Ok(Node::Leaf(lines.parse_usize(i)?));
    }
    if line != "gate" {
        return Err(lines.err(format!("expected `gate` or `leaf <i>`, found {line:?}")));
    }
    let w_a = keyed(lines, "w_a")?;
    let w_a = parse_values(lines, w_a, classes, "w_a")?;
    let b_a = keyed(lines, "b_a")?;
    let b_a = lines.parse_f64(b_a)?;
    let w_b = keyed(lines, "w_b")?;
    let w_b = parse_values(lines, w_b, classes, "w_b")?;
    let b_b = keyed(lines, "b_b")?;
    let b_b = lines.parse_f64(b_b)?;
    let gate = GateParams { w_a: Vector::new(w_a), b_a, w_b: Vector::new(w_b), b_b };
    let a = parse_node(lines, classes, depth + 1)?;
    let b = parse_node(lines, classes, depth + 1)?;
    Ok(Node::Gate { gate, a: Box::new(a), b: Box::new(b) })
}

pub fn tree_from_str<F>(path: &Path, text: &str, mut resolve: F) -> Result<EnsembleTree>
where
    F: FnMut(&Path) -> Result<GruModel>,
{
    let mut lines = Lines::new(path, text);
    if lines.expect("header")? != TREE_HEADER {
        return Err(lines.err(format!("expected header {TREE_HEADER:?}")));
    }
    let classes = keyed(&mut lines, "classes")?;
    let class_names: Vec<String> = classes.split(',').map(str::to_string).collect();
    let n = keyed(&mut lines, "members")?;
    let n = lines.parse_usize(n)?;
    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let rest = keyed(&mut lines, "member")?;
        let mut parts = rest.splitn(3, ' ');
        let (idx, head, file) = (parts.next(), parts.next(), parts.next());
        if idx != Some(i.to_string().as_str()) {
            return Err(lines.err(format!("expected member {i}")));
        }
        let head = head
            .and_then(|h| h.strip_prefix("head="))
            .ok_or_else(|| lines.err("expected head=<index>"))?;
        let head = lines.parse_usize(head)?;
        let file = file
            .and_then(|p| p.strip_prefix("path="))
            .ok_or_else(|| lines.err("expected path=<file>"))?;
        let file = PathBuf::from(file);
        let model = resolve(&file)?;
        members.push(Member { model: Arc::new(model), head, path: Some(file) });
    }
    let root = parse_node(&mut lines, class_names.len(), 0)?;
    if let Some(extra) = lines.next() {
        if !extra.trim().is_empty() {
            return Err(lines.err(format!("unexpected trailing content {extra:?}")));
        }
    }
    let tree = EnsembleTree::new(members, root)?;
    if tree.class_names != class_names {
        return Err(Error::Config(format!(
            "tree classes {class_names:?} differ from member classes {:?}",
            tree.class_names
        )));
    }
    Ok(tree)
}

/// A subtree in the fusion pool with its cached predictions.
#[derive(Clone)]
struct PoolEntry {
    node: Node,
    gate_preds: Vec<ProbVector>,
    rank_preds: Vec<ProbVector>,
    rank_acc: f64,
}

fn hard_accuracy(preds: &[ProbVector], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, l)| p.argmax() == **l).count();
    hits as f64 / labels.len().max(1) as f64
}

fn fuse(a: &PoolEntry, b: &PoolEntry, gate_labels: &[usize], rank_labels: &[usize], classes: usize, cfg: &GateConfig) -> Result<PoolEntry> {
    let gate = train_gate_on_predictions(&a.gate_preds, &b.gate_preds, gate_labels, classes, cfg)?;
    let mix = |pa: &[ProbVector], pb: &[ProbVector]| {
        pa.iter().zip(pb).map(|(x, y)| Ok(gate_forward(&gate, x, y)?.y)).collect::<Result<Vec<_>>>()
    };
    let gate_preds = mix(&a.gate_preds, &b.gate_preds)?;
    let rank_preds = mix(&a.rank_preds, &b.rank_preds)?;
    let rank_acc = hard_accuracy(&rank_preds, rank_labels);
    Ok(PoolEntry {
        node: Node::Gate { gate, a: Box::new(a.node.clone()), b: Box::new(b.node.clone()) },
        gate_preds,
        rank_preds,
        rank_acc,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionPhase {
    /// Best-ranked pool entry this phase.
    pub anchor: String,
    /// Each candidate partner with the ranking accuracy of its fusion.
    pub candidates: Vec<(String, f64)>,
    pub chosen: String,
}

#[derive(Debug, Clone)]
pub struct Fusion {
    pub tree: EnsembleTree,
    pub phases: Vec<FusionPhase>,
}

fn best_index(pool: &[PoolEntry]) -> usize {
    let mut best = 0;
    for (i, e) in pool.iter().enumerate() {
        if e.rank_acc > pool[best].rank_acc {
            best = i;
        }
    }
    best
}

/// Greedy pairwise fusion.
///
/// Each phase takes the pool entry with the highest accuracy on
/// `rank_data`, trains a gate (on `gate_data`) between it and every other
/// entry, and replaces the pair whose fusion ranks highest with that
/// fusion. The last two entries are fused unconditionally. Ties go to the
/// lower pool position; fused entries join the end of the pool.
pub fn greedy_fuse(members: Vec<Member>, gate_data: &LabeledDataset, rank_data: &LabeledDataset, cfg: &GateConfig) -> Result<Fusion> {
    if members.len() < 2 {
        return Err(Error::Config(format!("fusion needs at least two models, got {}", members.len())));
    }
    let classes = gate_data.classes();
    if rank_data.classes() != classes {
        return Err(Error::dim("ranking data classes", classes, rank_data.classes()));
    }
    for (i, m) in members.iter().enumerate() {
        if m.class_names().len() != classes {
            return Err(Error::dim(format!("classes of model {i}"), classes, m.class_names().len()));
        }
    }
    if gate_data.is_empty() || rank_data.is_empty() {
        return Err(Error::EmptyInput("fusion data is empty".into()));
    }
    let (gate_labels, rank_labels) = (gate_data.labels(), rank_data.labels());
    let mut pool = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let gate_preds = m.predict_dataset(gate_data)?;
            let rank_preds = m.predict_dataset(rank_data)?;
            let rank_acc = hard_accuracy(&rank_preds, &rank_labels);
            Ok(PoolEntry { node: Node::Leaf(i), gate_preds, rank_preds, rank_acc })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut phases = Vec::new();
    while pool.len() > 2 {
        let anchor = best_index(&pool);
        let partners: Vec<usize> = (0..pool.len()).filter(|&j| j != anchor).collect();
        let fused = partners
            .par_iter()
            .map(|&j| fuse(&pool[anchor], &pool[j], &gate_labels, &rank_labels, classes, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut pick = 0;
        for (k, f) in fused.iter().enumerate() {
            if f.rank_acc > fused[pick].rank_acc {
                pick = k;
            }
        }
        phases.push(FusionPhase {
            anchor: pool[anchor].node.describe(),
            candidates: partners.iter().zip(&fused).map(|(&j, f)| (pool[j].node.describe(), f.rank_acc)).collect(),
            chosen: pool[partners[pick]].node.describe(),
        });
        let winner = fused.into_iter().nth(pick).expect("pick is in range");
        let partner = partners[pick];
        pool = pool
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != anchor && *i != partner)
            .map(|(_, e)| e)
            .collect();
        pool.push(winner);
    }
    let (a, b) = if pool[1].rank_acc > pool[0].rank_acc { (1, 0) } else { (0, 1) };
    let last = fuse(&pool[a], &pool[b], &gate_labels, &rank_labels, classes, cfg)?;
    phases.push(FusionPhase {
        anchor: pool[a].node.describe(),
        candidates: vec![(pool[b].node.describe(), last.rank_acc)],
        chosen: pool[b].node.describe(),
    });
    let tree = EnsembleTree::new(members, last.node)?;
    Ok(Fusion { tree, phases })
}

/// Distills a tree into a single GRU over `texts`.
pub fn distill_ensemble<S: AsRef<str>>(
    tree: &EnsembleTree,
    texts: &[S],
    cfg: &DistillConfig,
    embeddings: Arc<EmbeddingTable>,
) -> Result<Student> {
    let teacher = Teacher::Ensemble(tree.clone());
    let n = if cfg.num_examples == 0 { texts.len() } else { cfg.num_examples };
    let soft = generate_soft_dataset(&teacher, texts, n)?;
    train_student(cfg, &soft, embeddings)
}
