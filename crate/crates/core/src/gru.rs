//! Single-layer GRU sequence classifier.
//!
//! ```text
//! z_t = σ(W_xz x_t + W_hz h_{t-1})
//! r_t = σ(W_xr x_t + W_hr h_{t-1})
//! h̃_t = tanh(W_xh x_t + r_t ∘ (W_hh h_{t-1}))
//! h_t = z_t ∘ h_{t-1} + (1 − z_t) ∘ h̃_t
//! ŷ   = softmax(W_yh h_L + b_y)
//! ```
//!
//! The final hidden state `h_L` is shared by every output head of a model.
//! A model may also carry a frozen lateral column (a second GRU over the same
//! inputs) whose final state feeds each head through a lateral matrix.

use std::sync::Arc;

use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{mse_slice, sigmoid, softmax_slice, Matrix, ProbVector, Vector};
use crate::rng::{seeded, Stream};

/// The six recurrent weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_xz: Matrix,
    pub w_xr: Matrix,
    pub w_xh: Matrix,
    pub w_hz: Matrix,
    pub w_hr: Matrix,
    pub w_hh: Matrix,
}

pub const GRU_BLOCK_NAMES: [&str; 6] = ["w_xz", "w_xr", "w_xh", "w_hz", "w_hr", "w_hh"];

impl GruParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let ih = || Matrix::zeros(hidden_size, input_size);
        let hh = || Matrix::zeros(hidden_size, hidden_size);
        GruParams {
            input_size,
            hidden_size,
            w_xz: ih(),
            w_xr: ih(),
            w_xh: ih(),
            w_hz: hh(),
            w_hr: hh(),
            w_hh: hh(),
        }
    }

    /// Glorot-uniform initialization of all six matrices, in block order.
    pub fn random<R: Rng>(hidden_size: usize, input_size: usize, rng: &mut R) -> Self {
        let mut p = GruParams::zeros(hidden_size, input_size);
        for m in p.blocks_mut() {
            glorot_fill(m, rng);
        }
        p
    }

    pub fn blocks(&self) -> [&Matrix; 6] {
        [&self.w_xz, &self.w_xr, &self.w_xh, &self.w_hz, &self.w_hr, &self.w_hh]
    }

    pub fn blocks_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.w_xz,
            &mut self.w_xr,
            &mut self.w_xh,
            &mut self.w_hz,
            &mut self.w_hr,
            &mut self.w_hh,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in GRU_BLOCK_NAMES.iter().zip(self.blocks()) {
            let cols = if name.starts_with("w_x") { self.input_size } else { self.hidden_size };
            if m.rows() != self.hidden_size {
                return Err(Error::dim(format!("{name} rows"), self.hidden_size, m.rows()));
            }
            if m.cols() != cols {
                return Err(Error::dim(format!("{name} cols"), cols, m.cols()));
            }
            if !m.is_finite() {
                return Err(Error::Numerical { context: format!("non-finite entry in {name}") });
            }
        }
        Ok(())
    }
}

/// Half-width of the Glorot uniform range for a `rows × cols` matrix.
pub fn glorot_range(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

fn glorot_fill<R: Rng>(m: &mut Matrix, rng: &mut R) {
    let r = glorot_range(m.rows(), m.cols());
    for w in m.as_mut_slice() {
        *w = rng.random_range(-r..r);
    }
}

/// Single GRU update `h_{t-1} → h_t`.
pub fn gru_step(params: &GruParams, x_t: &Vector, h_prev: &Vector) -> Result<Vector> {
    if x_t.len() != params.input_size {
        return Err(Error::dim("gru_step input", params.input_size, x_t.len()));
    }
    if h_prev.len() != params.hidden_size {
        return Err(Error::dim("gru_step hidden", params.hidden_size, h_prev.len()));
    }
    Ok(Vector::new(step_cached(params, x_t.as_slice(), h_prev.as_slice()).h))
}

#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    /// `W_hh h_{t-1}`
    u: Vec<f64>,
    h_tilde: Vec<f64>,
    h: Vec<f64>,
}

fn step_cached(p: &GruParams, x: &[f64], h_prev: &[f64]) -> StepCache {
    let mut z = p.w_xz.matvec_slice(x);
    let hz = p.w_hz.matvec_slice(h_prev);
    let mut r = p.w_xr.matvec_slice(x);
    let hr = p.w_hr.matvec_slice(h_prev);
    let mut a_h = p.w_xh.matvec_slice(x);
    let u = p.w_hh.matvec_slice(h_prev);
    let n = p.hidden_size;
    let mut h_tilde = vec![0.0; n];
    let mut h = vec![0.0; n];
    for i in 0..n {
        z[i] = sigmoid(z[i] + hz[i]);
        r[i] = sigmoid(r[i] + hr[i]);
        a_h[i] += r[i] * u[i];
        h_tilde[i] = a_h[i].tanh();
        h[i] = z[i] * h_prev[i] + (1.0 - z[i]) * h_tilde[i];
    }
    StepCache {
        h_prev: h_prev.to_vec(),
        z,
        r,
        u,
        h_tilde,
        h,
    }
}

fn run_cached(p: &GruParams, inputs: &[Vector]) -> Result<Vec<StepCache>> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("token sequence is empty".into()));
    }
    let mut steps: Vec<StepCache> = Vec::with_capacity(inputs.len());
    let zero = vec![0.0; p.hidden_size];
    for x in inputs {
        if x.len() != p.input_size {
            return Err(Error::dim("sequence input", p.input_size, x.len()));
        }
        let h_prev = steps.last().map_or(zero.as_slice(), |s| s.h.as_slice());
        let cache = step_cached(p, x.as_slice(), h_prev);
        steps.push(cache);
    }
    Ok(steps)
}

/// Final hidden state of `params` folded over already-embedded inputs.
pub fn encode_inputs(params: &GruParams, inputs: &[Vector]) -> Result<Vector> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("token sequence is empty".into()));
    }
    let mut h = Vector::zeros(params.hidden_size);
    for x in inputs {
        h = gru_step(params, x, &h)?;
    }
    Ok(h)
}

/// `softmax(W_yh h + b_y)`
#[derive(Debug, Clone, PartialEq)]
pub struct OutputHead {
    pub w_yh: Matrix,
    pub b_y: Vector,
}

impl OutputHead {
    pub fn zeros(classes: usize, hidden: usize) -> Self {
        OutputHead {
            w_yh: Matrix::zeros(classes, hidden),
            b_y: Vector::zeros(classes),
        }
    }

    pub fn random<R: Rng>(classes: usize, hidden: usize, rng: &mut R) -> Self {
        let mut head = OutputHead::zeros(classes, hidden);
        glorot_fill(&mut head.w_yh, rng);
        head
    }

    pub fn classes(&self) -> usize {
        self.w_yh.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_yh.cols()
    }
}

pub fn predict(head: &OutputHead, h_last: &Vector) -> Result<ProbVector> {
    if h_last.len() != head.hidden_size() {
        return Err(Error::dim("predict", head.hidden_size(), h_last.len()));
    }
    if head.b_y.len() != head.classes() {
        return Err(Error::dim("predict bias", head.classes(), head.b_y.len()));
    }
    let mut logits = head.w_yh.matvec_slice(h_last.as_slice());
    for (l, b) in logits.iter_mut().zip(head.b_y.iter()) {
        *l += b;
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical { context: "output logits".into() });
    }
    Ok(ProbVector::from_trusted(softmax_slice(&logits)))
}

/// A named output head together with its training flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub name: String,
    pub class_names: Vec<String>,
    pub output: OutputHead,
    /// `U_lat`, mapping the lateral column's final state into this head.
    pub lateral: Option<Matrix>,
    pub frozen: bool,
    /// Holds `U_lat` fixed even when the rest of the head trains.
    pub lateral_frozen: bool,
}

impl Head {
    pub fn new(name: impl Into<String>, class_names: Vec<String>, output: OutputHead) -> Self {
        Head {
            name: name.into(),
            class_names,
            output,
            lateral: None,
            frozen: false,
            lateral_frozen: false,
        }
    }

    pub fn classes(&self) -> usize {
        self.output.classes()
    }

    fn lateral_trainable(&self) -> bool {
        self.lateral.is_some() && !self.frozen && !self.lateral_frozen
    }
}

pub fn default_class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|i| format!("c{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub params: GruParams,
    pub gru_frozen: bool,
    /// Frozen column read through lateral connections.
    pub lateral_column: Option<GruParams>,
    pub heads: Vec<Head>,
    pub embeddings: Arc<EmbeddingTable>,
}

/// Fresh model: Glorot-uniform weights, zero bias, a single head named
/// `target`. Fully determined by `seed`.
pub fn init_params(
    hidden: usize,
    input: usize,
    classes: usize,
    seed: u64,
    embeddings: Arc<EmbeddingTable>,
) -> Result<GruModel> {
    if hidden == 0 || input == 0 {
        return Err(Error::Config("GRU dimensions must be positive".into()));
    }
    if classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
    }
    if embeddings.dim() != input {
        return Err(Error::dim("embedding dimension", input, embeddings.dim()));
    }
    let mut rng = seeded(seed, Stream::Init);
    let params = GruParams::random(hidden, input, &mut rng);
    let head = OutputHead::random(classes, hidden, &mut rng);
    Ok(GruModel {
        params,
        gru_frozen: false,
        lateral_column: None,
        heads: vec![Head::new("target", default_class_names(classes), head)],
        embeddings,
    })
}

/// One weighted MSE term of the per-example loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub head: usize,
    pub target: ProbVector,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub w_yh: Matrix,
    pub b_y: Vector,
    pub lateral: Option<Matrix>,
}

/// Gradients of the scalar loss. Frozen blocks carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub gru: Option<GruParams>,
    pub heads: Vec<Option<HeadGrads>>,
}

impl Gradients {
    /// Concatenation in the order of [`GruModel::trainable_flat`].
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::new();
        if let Some(g) = &self.gru {
            for m in g.blocks() {
                out.extend_from_slice(m.as_slice());
            }
        }
        for h in self.heads.iter().flatten() {
            out.extend_from_slice(h.w_yh.as_slice());
            out.extend_from_slice(h.b_y.as_slice());
            if let Some(l) = &h.lateral {
                out.extend_from_slice(l.as_slice());
            }
        }
        Vector::new(out)
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|g| *g == 0.0)
    }
}

/// Intermediate state of a forward pass over one sequence.
pub struct Forward {
    steps: Vec<StepCache>,
    lateral_h: Option<Vec<f64>>,
}

impl Forward {
    pub fn h_last(&self) -> &[f64] {
        &self.steps.last().expect("non-empty sequence").h
    }
}

impl GruModel {
    pub fn hidden_size(&self) -> usize {
        self.params.hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.params.input_size
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    pub fn head(&self, name: &str) -> Result<&Head> {
        self.heads
            .iter()
            .find(|h| h.name == name)
            .ok_or_else(|| Error::Config(format!("model has no head named {name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.embeddings.dim() != self.params.input_size {
            return Err(Error::dim("embedding dimension", self.params.input_size, self.embeddings.dim()));
        }
        if let Some(col) = &self.lateral_column {
            col.validate()?;
            if col.input_size != self.params.input_size {
                return Err(Error::dim("lateral column input", self.params.input_size, col.input_size));
            }
        }
        if self.heads.is_empty() {
            return Err(Error::Config("model has no output heads".into()));
        }
        for h in &self.heads {
            if h.output.hidden_size() != self.hidden_size() {
                return Err(Error::dim(format!("head {} hidden", h.name), self.hidden_size(), h.output.hidden_size()));
            }
            if h.classes() < 2 || h.output.b_y.len() != h.classes() || h.class_names.len() != h.classes() {
                return Err(Error::Config(format!("head {} has inconsistent class dimensions", h.name)));
            }
            match (&h.lateral, &self.lateral_column) {
                (Some(l), Some(col)) => {
                    if l.rows() != h.classes() || l.cols() != col.hidden_size {
                        return Err(Error::dim(format!("head {} lateral", h.name), col.hidden_size, l.cols()));
                    }
                }
                (Some(_), None) => {
                    return Err(Error::Config(format!("head {} has a lateral matrix but no lateral column", h.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Looks up fixed embeddings; unknown tokens become zero vectors.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Vector> {
        self.embeddings.embed(tokens)
    }

    pub fn encode_sequence<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vector> {
        encode_inputs(&self.params, &self.embed(tokens))
    }

    pub fn forward(&self, inputs: &[Vector]) -> Result<Forward> {
        let steps = run_cached(&self.params, inputs)?;
        let lateral_h = match &self.lateral_column {
            Some(col) => Some(encode_inputs(col, inputs)?.into_inner()),
            None => None,
        };
        Ok(Forward { steps, lateral_h })
    }

    fn logits(&self, head: &Head, fwd: &Forward) -> Vec<f64> {
        let mut logits = head.output.w_yh.matvec_slice(fwd.h_last());
        if let (Some(lat), Some(hs)) = (&head.lateral, &fwd.lateral_h) {
            for (l, v) in logits.iter_mut().zip(lat.matvec_slice(hs)) {
                *l += v;
            }
        }
        for (l, b) in logits.iter_mut().zip(head.output.b_y.iter()) {
            *l += b;
        }
        logits
    }

    pub fn predict_forward(&self, head: usize, fwd: &Forward) -> Result<ProbVector> {
        let head = self
            .heads
            .get(head)
            .ok_or_else(|| Error::Config(format!("head index {head} out of range")))?;
        let logits = self.logits(head, fwd);
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numerical { context: format!("logits of head {}", head.name) });
        }
        Ok(ProbVector::from_trusted(softmax_slice(&logits)))
    }

    /// Prediction of head `head` on embedded inputs.
    pub fn predict_inputs(&self, head: usize, inputs: &[Vector]) -> Result<ProbVector> {
        let fwd = self.forward(inputs)?;
        self.predict_forward(head, &fwd)
    }

    pub fn predict_tokens<S: AsRef<str>>(&self, head: usize, tokens: &[S]) -> Result<ProbVector> {
        self.predict_inputs(head, &self.embed(tokens))
    }

    /// Weighted sum of MSE terms on one example, without gradients.
    pub fn loss(&self, inputs: &[Vector], terms: &[LossTerm]) -> Result<f64> {
        let fwd = self.forward(inputs)?;
        let mut total = 0.0;
        for t in terms {
            let p = self.predict_forward(t.head, &fwd)?;
            check_term(self, t)?;
            if t.weight != 0.0 {
                total += t.weight * mse_slice(t.target.as_slice(), p.as_slice());
            }
        }
        Ok(total)
    }

    /// Loss and exact gradients via backpropagation through time.
    ///
    /// Terms with weight exactly zero are skipped, so they contribute
    /// nothing, not even signed zeros.
    pub fn compute_gradients(&self, inputs: &[Vector], terms: &[LossTerm]) -> Result<(f64, Gradients)> {
        for t in terms {
            check_term(self, t)?;
        }
        let fwd = self.forward(inputs)?;
        let hidden = self.hidden_size();
        let mut loss = 0.0;
        // dL/dlogits per head, summed over terms
        let mut d_logits: Vec<Option<Vec<f64>>> = vec![None; self.heads.len()];
        for t in terms.iter().filter(|t| t.weight != 0.0) {
            let head = &self.heads[t.head];
            let p = softmax_slice(&self.logits(head, &fwd));
            let c = p.len() as f64;
            loss += t.weight * mse_slice(t.target.as_slice(), &p);
            let g: Vec<f64> = p
                .iter()
                .zip(t.target.as_slice())
                .map(|(yh, y)| t.weight * 2.0 * (yh - y) / c)
                .collect();
            let inner: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
            let dl: Vec<f64> = p.iter().zip(&g).map(|(pk, gk)| pk * (gk - inner)).collect();
            match &mut d_logits[t.head] {
                Some(acc) => acc.iter_mut().zip(&dl).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(dl),
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numerical { context: "loss value".into() });
        }

        let h_last = fwd.h_last();
        let mut dh = vec![0.0; hidden];
        let mut head_grads = Vec::with_capacity(self.heads.len());
        for (head, dl) in self.heads.iter().zip(&d_logits) {
            let Some(dl) = dl else {
                head_grads.push(if head.frozen { None } else { Some(zero_head_grads(head)) });
                continue;
            };
            if !self.gru_frozen {
                head.output.w_yh.matvec_t_acc(dl, &mut dh);
            }
            if head.frozen {
                head_grads.push(None);
                continue;
            }
            let mut w_yh = Matrix::zeros(head.classes(), hidden);
            w_yh.add_outer(dl, h_last);
            let lateral = if head.lateral_trainable() {
                let hs = fwd.lateral_h.as_ref().expect("lateral column present");
                let mut m = Matrix::zeros(head.classes(), hs.len());
                m.add_outer(dl, hs);
                Some(m)
            } else {
                None
            };
            let grads = HeadGrads { w_yh, b_y: Vector::new(dl.clone()), lateral };
            if !grads.w_yh.is_finite() || !grads.b_y.is_finite() {
                return Err(Error::Numerical { context: format!("gradient of head {}", head.name) });
            }
            head_grads.push(Some(grads));
        }

        let gru = if self.gru_frozen {
            None
        } else {
            let g = self.backprop_through_time(&fwd, dh, inputs);
            for (name, m) in GRU_BLOCK_NAMES.iter().zip(g.blocks()) {
                if !m.is_finite() {
                    return Err(Error::Numerical { context: format!("gradient of gru.{name}") });
                }
            }
            Some(g)
        };
        Ok((loss, Gradients { gru, heads: head_grads }))
    }

    fn backprop_through_time(&self, fwd: &Forward, mut dh: Vec<f64>, inputs: &[Vector]) -> GruParams {
        let p = &self.params;
        let n = p.hidden_size;
        let mut g = GruParams::zeros(n, p.input_size);
        let mut da_z = vec![0.0; n];
        let mut da_r = vec![0.0; n];
        let mut da_h = vec![0.0; n];
        let mut du = vec![0.0; n];
        for (step, x) in fwd.steps.iter().zip(inputs).rev() {
            for i in 0..n {
                let z = step.z[i];
                let r = step.r[i];
                let ht = step.h_tilde[i];
                da_z[i] = dh[i] * (step.h_prev[i] - ht) * z * (1.0 - z);
                da_h[i] = dh[i] * (1.0 - z) * (1.0 - ht * ht);
                da_r[i] = da_h[i] * step.u[i] * r * (1.0 - r);
                du[i] = da_h[i] * r;
            }
            let x = x.as_slice();
            g.w_xz.add_outer(&da_z, x);
            g.w_xr.add_outer(&da_r, x);
            g.w_xh.add_outer(&da_h, x);
            g.w_hz.add_outer(&da_z, &step.h_prev);
            g.w_hr.add_outer(&da_r, &step.h_prev);
            g.w_hh.add_outer(&du, &step.h_prev);

            let mut dh_prev: Vec<f64> = dh.iter().zip(&step.z).map(|(d, z)| d * z).collect();
            p.w_hz.matvec_t_acc(&da_z, &mut dh_prev);
            p.w_hr.matvec_t_acc(&da_r, &mut dh_prev);
            p.w_hh.matvec_t_acc(&du, &mut dh_prev);
            dh = dh_prev;
        }
        g
    }

    /// `θ ← θ − lr·g` for every trainable block.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if grads.heads.len() != self.heads.len() {
            return Err(Error::dim("gradient heads", self.heads.len(), grads.heads.len()));
        }
        match (&grads.gru, self.gru_frozen) {
            (Some(_), true) => return Err(Error::Config("gradient supplied for frozen GRU".into())),
            (Some(g), false) => {
                for (w, gw) in self.params.blocks_mut().into_iter().zip(g.blocks()) {
                    w.sgd_update(gw, lr)?;
                }
            }
            (None, _) => {}
        }
        for (head, g) in self.heads.iter_mut().zip(&grads.heads) {
            let Some(g) = g else { continue };
            if head.frozen {
                return Err(Error::Config(format!("gradient supplied for frozen head {}", head.name)));
            }
            head.output.w_yh.sgd_update(&g.w_yh, lr)?;
            if g.b_y.len() != head.output.b_y.len() {
                return Err(Error::dim("bias gradient", head.output.b_y.len(), g.b_y.len()));
            }
            for (b, gb) in head.output.b_y.as_mut_slice().iter_mut().zip(g.b_y.iter()) {
                *b -= lr * gb;
            }
            if let (Some(gl), Some(l)) = (&g.lateral, &mut head.lateral) {
                if !head.lateral_frozen {
                    l.sgd_update(gl, lr)?;
                }
            }
        }
        Ok(())
    }

    /// Trainable parameters as one vector: GRU blocks, then per head
    /// `W_yh`, `b_y`, `U_lat`.
    pub fn trainable_flat(&self) -> Vector {
        let mut out = Vec::new();
        if !self.gru_frozen {
            for m in self.params.blocks() {
                out.extend_from_slice(m.as_slice());
            }
        }
        for h in self.heads.iter().filter(|h| !h.frozen) {
            out.extend_from_slice(h.output.w_yh.as_slice());
            out.extend_from_slice(h.output.b_y.as_slice());
            if h.lateral_trainable() {
                out.extend_from_slice(h.lateral.as_ref().expect("lateral").as_slice());
            }
        }
        Vector::new(out)
    }

    /// Inverse of [`GruModel::trainable_flat`].
    pub fn set_trainable_flat(&mut self, flat: &Vector) -> Result<()> {
        let expected = self.trainable_flat().len();
        if flat.len() != expected {
            return Err(Error::dim("trainable parameter vector", expected, flat.len()));
        }
        let mut src = flat.as_slice();
        let mut take = |dst: &mut [f64]| {
            let (head, rest) = src.split_at(dst.len());
            dst.copy_from_slice(head);
            src = rest;
        };
        if !self.gru_frozen {
            for m in self.params.blocks_mut() {
                take(m.as_mut_slice());
            }
        }
        for h in self.heads.iter_mut().filter(|h| !h.frozen) {
            take(h.output.w_yh.as_mut_slice());
            take(h.output.b_y.as_mut_slice());
            if let (Some(lat), false) = (h.lateral.as_mut(), h.lateral_frozen) {
                take(lat.as_mut_slice());
            }
        }
        Ok(())
    }

    /// Every parameter (trainable or not) as raw bytes, for bit-level
    /// comparisons.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut push = |s: &[f64]| s.iter().for_each(|v| out.extend_from_slice(&v.to_bits().to_le_bytes()));
        for m in self.params.blocks() {
            push(m.as_slice());
        }
        if let Some(col) = &self.lateral_column {
            for m in col.blocks() {
                push(m.as_slice());
            }
        }
        for h in &self.heads {
            push(h.output.w_yh.as_slice());
            push(h.output.b_y.as_slice());
            if let Some(l) = &h.lateral {
                push(l.as_slice());
            }
        }
        out
    }
}

fn zero_head_grads(head: &Head) -> HeadGrads {
    HeadGrads {
        w_yh: Matrix::zeros(head.classes(), head.output.hidden_size()),
        b_y: Vector::zeros(head.classes()),
        lateral: head
            .lateral
            .as_ref()
            .filter(|_| head.lateral_trainable())
            .map(|l| Matrix::zeros(l.rows(), l.cols())),
    }
}

fn check_term(model: &GruModel, t: &LossTerm) -> Result<()> {
    let head = model
        .heads
        .get(t.head)
        .ok_or_else(|| Error::Config(format!("loss term references missing head {}", t.head)))?;
    if !t.weight.is_finite() {
        return Err(Error::Config(format!("loss weight {} is not finite", t.weight)));
    }
    if t.target.len() != head.classes() {
        return Err(Error::dim(format!("target for head {}", head.name), head.classes(), t.target.len()));
    }
    Ok(())
}

/// Standalone `h_L` for a token sequence.
pub fn encode_sequence<S: AsRef<str>>(model: &GruModel, tokens: &[S]) -> Result<Vector> {
    model.encode_sequence(tokens)
}
