//! Dense 64-bit vector and matrix primitives, the losses used throughout the
//! crate, and a central finite-difference gradient oracle.

use std::ops::Index;

use crate::error::{Error, Result};

/// Default probe width for gradient checks.
pub const DEFAULT_FD_EPSILON: f64 = 1e-5;

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Self {
        Vector(values)
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_len("dot", self.len(), other.len())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_len("add", self.len(), other.len())?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_len("sub", self.len(), other.len())?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        check_len("hadamard", self.len(), other.len())?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect()))
    }

    pub fn scale(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn max_abs_diff(&self, other: &Vector) -> Result<f64> {
        check_len("max_abs_diff", self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(values: Vec<f64>) -> Self {
        Vector(values)
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("matrix data", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self · x`
    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        check_len("matvec", self.cols, x.len())?;
        Ok(Vector(self.matvec_slice(x.as_slice())))
    }

    /// `selfᵀ · y`
    pub fn matvec_transposed(&self, y: &Vector) -> Result<Vector> {
        check_len("matvec_transposed", self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        self.matvec_t_acc(y.as_slice(), &mut out);
        Ok(Vector(out))
    }

    pub(crate) fn matvec_slice(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `out += selfᵀ · y`
    pub(crate) fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a · bᵀ`
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols;
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            for (w, bc) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }

    /// `self -= lr · grad`
    pub fn sgd_update(&mut self, grad: &Matrix, lr: f64) -> Result<()> {
        if !self.same_shape(grad) {
            return Err(Error::dim("sgd_update", self.data.len(), grad.data.len()));
        }
        for (w, g) in self.data.iter_mut().zip(&grad.data) {
            *w -= lr * g;
        }
        Ok(())
    }
}

/// A probability vector: every entry in `[0, 1]`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vector);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("probability vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidInput(format!(
                "probability entries must lie in [0, 1]: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ProbVector(Vector(values)))
    }

    /// One-hot vector of length `classes` with a one at `index`.
    pub fn one_hot(index: usize, classes: usize) -> Result<Self> {
        if index >= classes {
            return Err(Error::dim("one_hot", classes, index));
        }
        let mut v = vec![0.0; classes];
        v[index] = 1.0;
        Ok(ProbVector(Vector(v)))
    }

    pub fn uniform(classes: usize) -> Self {
        ProbVector(Vector(vec![1.0 / classes as f64; classes]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(self.as_slice())
    }

    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        ProbVector(Vector(values))
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(v: &Vector) -> Result<ProbVector> {
    if v.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!(
            "softmax input is not finite: {:?}",
            v.as_slice()
        )));
    }
    Ok(ProbVector(Vector(softmax_slice(v.as_slice()))))
}

pub(crate) fn softmax_slice(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean squared error `(1/C) Σ (y_i − ŷ_i)²`.
pub fn mse_loss(y: &Vector, y_hat: &Vector) -> Result<f64> {
    check_len("mse_loss", y.len(), y_hat.len())?;
    Ok(mse_slice(y.as_slice(), y_hat.as_slice()))
}

/// Gradient of [`mse_loss`] with respect to `y_hat`: `2(ŷ − y)/C`.
pub fn mse_grad(y: &Vector, y_hat: &Vector) -> Result<Vector> {
    check_len("mse_grad", y.len(), y_hat.len())?;
    let c = y.len() as f64;
    Ok(Vector(
        y.iter()
            .zip(y_hat.iter())
            .map(|(t, p)| 2.0 * (p - t) / c)
            .collect(),
    ))
}

pub(crate) fn mse_slice(y: &[f64], y_hat: &[f64]) -> f64 {
    let c = y.len() as f64;
    y.iter()
        .zip(y_hat)
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
        / c
}

/// Central-difference gradient of `loss_fn` at `params`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &Vector, epsilon: f64) -> Result<Vector>
where
    F: FnMut(&Vector) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "finite-difference epsilon must be positive, got {epsilon}"
        )));
    }
    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe.0[i];
        probe.0[i] = orig + epsilon;
        let plus = loss_fn(&probe)?;
        probe.0[i] = orig - epsilon;
        let minus = loss_fn(&probe)?;
        probe.0[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical {
                context: format!("finite difference probe at parameter index {i}"),
            });
        }
        grad.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(Vector(grad))
}

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest [`relative_error`] over paired entries.
pub fn max_relative_error(a: &Vector, b: &Vector) -> Result<f64> {
    check_len("max_relative_error", a.len(), b.len())?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| relative_error(*x, *y))
        .fold(0.0, f64::max))
}

fn check_len(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::dim(context, expected, found));
    }
    Ok(())
}
