//! Linear multiclass scores over sparse inputs and the three training
//! objectives built on them: the exact softmax log likelihood, the one-vs-each
//! bound, and the variational bound with one alpha per instance.
//!
//! All objectives carry the penalty `-lambda/2 ||W||^2` on the weights only;
//! biases are not regularized.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{log_sigmoid, lse, sigmoid, softmax_into, softplus, AlphaSolver, BoundsError, ScoreVector};
use crate::data::SparseDataset;
use crate::optim::{maximize, AscentOptions};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),
    #[error("feature index {index} out of range for {features} features")]
    FeatureOutOfRange { index: usize, features: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("model is {model_classes}x{model_features} but data is {data_classes}x{data_features}")]
    ShapeMismatch { model_classes: usize, model_features: usize, data_classes: usize, data_features: usize },
    #[error("expected {expected} variational parameters, got {got}")]
    AlphaCount { expected: usize, got: usize },
    #[error("objective {0:?} has no per-instance alphas")]
    MissingAlphas(ObjectiveKind),
    #[error("regularization strength must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Sorted, duplicate-free sparse feature vector with finite non-zero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SparseVector<T: Scalar> {
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn new(indices: Vec<u32>, values: Vec<T>) -> Result<Self, ModelError> {
        if indices.len() != values.len() {
            return Err(ModelError::InvalidVector(format!("{} indices but {} values", indices.len(), values.len())));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidVector(format!("indices not strictly increasing at {}", w[1])));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || v.is_zero()) {
            return Err(ModelError::InvalidVector(format!("value {v} is zero or not finite")));
        }
        Ok(SparseVector { indices, values })
    }

    /// Keeps the non-zero entries of a dense slice.
    pub fn from_dense(dense: &[T]) -> Result<Self, ModelError> {
        let (indices, values) =
            dense.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(j, &v)| (j as u32, v)).unzip();
        Self::new(indices, values)
    }

    pub fn empty() -> Self {
        SparseVector { indices: Vec::new(), values: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().map(|&j| j as usize).zip(self.values.iter().copied())
    }

    /// One past the largest index, 0 when empty.
    pub fn dim_lower_bound(&self) -> usize {
        self.indices.last().map_or(0, |&j| j as usize + 1)
    }

    /// `sum_j row[j] x_j`; `row` must cover every index.
    #[inline]
    pub fn dot(&self, row: &[T]) -> T {
        let mut acc = T::zero();
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            acc += row[j as usize] * v;
        }
        acc
    }

    /// `row += a x`.
    #[inline]
    pub fn axpy_into(&self, a: T, row: &mut [T]) {
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            row[j as usize] += a * v;
        }
    }

    pub fn to_dense(&self, features: usize) -> Vec<T> {
        let mut out = vec![T::zero(); features];
        for (j, v) in self.iter() {
            out[j] = v;
        }
        out
    }
}

/// `K` linear score functions `f_k(x) = w_k . x + b_k` over `D` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LinearModel<T: Scalar> {
    classes: usize,
    features: usize,
    /// Class-major `K x D`.
    weights: Vec<T>,
    biases: Vec<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn zeros(classes: usize, features: usize) -> Self {
        LinearModel {
            classes,
            features,
            weights: vec![T::zero(); classes * features],
            biases: vec![T::zero(); classes],
        }
    }

    pub fn from_parts(classes: usize, features: usize, weights: Vec<T>, biases: Vec<T>) -> Result<Self, ModelError> {
        if weights.len() != classes * features || biases.len() != classes {
            return Err(ModelError::Checkpoint(format!(
                "{} weights and {} biases do not fit a {classes}x{features} model",
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(ModelError::Checkpoint("non-finite parameter".into()));
        }
        Ok(LinearModel { classes, features, weights, biases })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [T] {
        &mut self.biases
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.weights[k * self.features..(k + 1) * self.features]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.weights[k * self.features..(k + 1) * self.features]
    }

    /// `||W||^2`, biases excluded.
    pub fn weight_sq_norm(&self) -> T {
        self.weights.iter().map(|&w| w * w).sum()
    }

    /// Parameters flattened as weights followed by biases.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.biases);
        v
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        let (w, b) = flat.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.biases.copy_from_slice(b);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }

    fn check_input(&self, x: &SparseVector<T>) -> Result<(), ModelError> {
        match x.indices.last() {
            Some(&j) if j as usize >= self.features => {
                Err(ModelError::FeatureOutOfRange { index: j as usize, features: self.features })
            }
            _ => Ok(()),
        }
    }

    /// Writes the `K` scores of `x` into `out`. Indices of `x` must be in range.
    #[inline]
    pub fn scores_into(&self, x: &SparseVector<T>, out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.biases[k] + x.dot(self.row(k));
        }
    }

    pub fn scores(&self, x: &SparseVector<T>) -> Result<ScoreVector<T>, ModelError> {
        self.check_input(x)?;
        let mut out = vec![T::zero(); self.classes];
        self.scores_into(x, &mut out);
        Ok(ScoreVector::new(out)?)
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, x: &SparseVector<T>) -> Result<usize, ModelError> {
        self.check_input(x)?;
        let mut out = vec![T::zero(); self.classes];
        self.scores_into(x, &mut out);
        Ok(argmax(&out))
    }

    /// Exact softmax probabilities, whatever objective trained the model.
    pub fn predict_proba(&self, x: &SparseVector<T>) -> Result<Vec<T>, ModelError> {
        self.check_input(x)?;
        let mut scores = vec![T::zero(); self.classes];
        self.scores_into(x, &mut scores);
        let mut p = vec![T::zero(); self.classes];
        softmax_into(&scores, &mut p);
        Ok(p)
    }

    fn check_data(&self, data: &SparseDataset<T>) -> Result<(), ModelError> {
        if data.classes() != self.classes || data.features() > self.features {
            return Err(ModelError::ShapeMismatch {
                model_classes: self.classes,
                model_features: self.features,
                data_classes: data.classes(),
                data_features: data.features(),
            });
        }
        Ok(())
    }

    // -- checkpoints --------------------------------------------------------

    /// Binary checkpoint: magic, version (u32), K and D (u64), then the
    /// class-major weight block and the bias block, all little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.classes as u64).to_le_bytes())?;
        w.write_all(&(self.features as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * (self.weights.len() + self.biases.len()));
        for v in self.weights.iter().chain(&self.biases) {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("wrong magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let classes = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let features = u64::from_le_bytes(b8) as usize;
        let count = classes
            .checked_mul(features)
            .and_then(|n| n.checked_add(classes))
            .filter(|&n| n.checked_mul(8).is_some())
            .ok_or_else(|| ModelError::Checkpoint("dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                count * 8,
                bytes.len()
            )));
        }
        let mut params: Vec<T> =
            bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))).collect();
        let biases = params.split_off(classes * features);
        Self::from_parts(classes, features, params, biases)
    }

    /// Human-readable dump with one weight row per class.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.classes).map(|k| self.row(k).iter().map(|v| v.as_f64()).collect()).collect();
        serde_json::json!({
            "K": self.classes,
            "D": self.features,
            "weights": rows,
            "biases": self.biases.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"OVELINM\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    #[serde(rename = "soft")]
    ExactSoftmax,
    #[serde(rename = "ove")]
    Ove,
    #[serde(rename = "bouchard")]
    Bouchard,
}

impl ObjectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveKind::ExactSoftmax => "soft",
            ObjectiveKind::Ove => "ove",
            ObjectiveKind::Bouchard => "bouchard",
        }
    }
}

/// A training objective. `alphas` holds one variational parameter per
/// instance and is present exactly when `kind` is `Bouchard`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Objective<T: Scalar> {
    pub kind: ObjectiveKind,
    pub lambda: T,
    pub alphas: Option<Vec<T>>,
}

impl<T: Scalar> Objective<T> {
    pub fn exact(lambda: T) -> Self {
        Objective { kind: ObjectiveKind::ExactSoftmax, lambda, alphas: None }
    }

    pub fn ove(lambda: T) -> Self {
        Objective { kind: ObjectiveKind::Ove, lambda, alphas: None }
    }

    pub fn bouchard(lambda: T, alphas: Vec<T>) -> Self {
        Objective { kind: ObjectiveKind::Bouchard, lambda, alphas: Some(alphas) }
    }

    fn validate(&self, n: usize) -> Result<(), ModelError> {
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(ModelError::InvalidLambda(self.lambda.as_f64()));
        }
        match (&self.kind, &self.alphas) {
            (ObjectiveKind::Bouchard, None) => Err(ModelError::MissingAlphas(self.kind)),
            (ObjectiveKind::Bouchard, Some(a)) if a.len() != n => {
                Err(ModelError::AlphaCount { expected: n, got: a.len() })
            }
            (ObjectiveKind::Bouchard, Some(a)) if a.iter().any(|v| !v.is_finite()) => {
                Err(ModelError::Bounds(BoundsError::NonFiniteAlpha))
            }
            _ => Ok(()),
        }
    }
}

/// Gradient with respect to the weights (class-major) and the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Gradient { weights: vec![T::zero(); classes * features], biases: vec![T::zero(); classes] }
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.biases);
        v
    }

    pub fn inf_norm(&self) -> T {
        self.weights.iter().chain(&self.biases).fold(T::zero(), |m, &g| m.max(g.abs()))
    }
}

/// How the per-instance variational parameter is obtained.
#[derive(Clone, Copy)]
enum AlphaSource<'a, T> {
    Given(&'a [T]),
    Solve(&'a AlphaSolver),
}

/// Data term of one instance: writes `d value / d f` into `dscore`, returns the value.
#[inline]
fn instance_term<T: Scalar>(kind: ObjectiveKind, scores: &[T], y: usize, alpha: Option<T>, dscore: &mut [T]) -> T {
    match kind {
        ObjectiveKind::ExactSoftmax => {
            let z = lse(scores);
            for (d, &s) in dscore.iter_mut().zip(scores) {
                *d = -(s - z).exp();
            }
            dscore[y] += T::one();
            scores[y] - z
        }
        ObjectiveKind::Ove => {
            let fy = scores[y];
            let mut value = T::zero();
            let mut total = T::zero();
            for (m, (d, &fm)) in dscore.iter_mut().zip(scores).enumerate() {
                if m == y {
                    *d = T::zero();
                    continue;
                }
                value += log_sigmoid(fy - fm);
                let w = sigmoid(fm - fy);
                *d = -w;
                total += w;
            }
            dscore[y] = total;
            value
        }
        ObjectiveKind::Bouchard => {
            let a = alpha.expect("alpha resolved by caller");
            let mut upper = a;
            for (d, &fm) in dscore.iter_mut().zip(scores) {
                upper += softplus(fm - a);
                *d = -sigmoid(fm - a);
            }
            dscore[y] += T::one();
            scores[y] - upper
        }
    }
}

/// Rows per parallel chunk. Fixed by the data size alone so the reduction order,
/// and hence the result, does not depend on the thread count.
fn chunk_len(n: usize) -> usize {
    n.div_ceil(32).max(64)
}

struct Evaluation<T> {
    value: T,
    grad: Option<Gradient<T>>,
}

fn evaluate<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    kind: ObjectiveKind,
    lambda: T,
    alphas: Option<AlphaSource<'_, T>>,
    want_grad: bool,
) -> Result<Evaluation<T>, ModelError> {
    let rows = data.rows();
    let chunk = chunk_len(rows.len());
    let (kk, dd) = (m.classes, m.features);

    let parts: Vec<Result<(T, Option<Gradient<T>>), ModelError>> = rows
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, rows)| {
            let mut scores = vec![T::zero(); kk];
            let mut dscore = vec![T::zero(); kk];
            let mut grad = want_grad.then(|| Gradient::zeros(kk, dd));
            let mut value = T::zero();
            for (i, ex) in rows.iter().enumerate() {
                m.scores_into(&ex.x, &mut scores);
                let alpha = match alphas {
                    None => None,
                    Some(AlphaSource::Given(a)) => Some(a[ci * chunk + i]),
                    Some(AlphaSource::Solve(solver)) => Some(solver.solve(&scores)?),
                };
                value += instance_term(kind, &scores, ex.label, alpha, &mut dscore);
                if let Some(g) = grad.as_mut() {
                    for (k, &d) in dscore.iter().enumerate() {
                        if d != T::zero() {
                            ex.x.axpy_into(d, &mut g.weights[k * dd..(k + 1) * dd]);
                            g.biases[k] += d;
                        }
                    }
                }
            }
            Ok((value, grad))
        })
        .collect();

    let mut value = T::zero();
    let mut grad = want_grad.then(|| Gradient::zeros(kk, dd));
    for part in parts {
        let (v, g) = part?;
        value += v;
        if let (Some(total), Some(g)) = (grad.as_mut(), g) {
            for (t, x) in total.weights.iter_mut().zip(&g.weights) {
                *t += *x;
            }
            for (t, x) in total.biases.iter_mut().zip(&g.biases) {
                *t += *x;
            }
        }
    }
    value -= T::half() * lambda * m.weight_sq_norm();
    if let Some(g) = grad.as_mut() {
        for (gw, &w) in g.weights.iter_mut().zip(&m.weights) {
            *gw -= lambda * w;
        }
    }
    Ok(Evaluation { value, grad })
}

fn prepare<T: Scalar>(m: &LinearModel<T>, data: &SparseDataset<T>, lambda: T) -> Result<(), ModelError> {
    m.check_data(data)?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(ModelError::InvalidLambda(lambda.as_f64()));
    }
    Ok(())
}

/// `sum_n [f_{y_n}(x_n) - log sum_m e^{f_m(x_n)}] - lambda/2 ||W||^2`.
pub fn exact_loglik<T: Scalar>(m: &LinearModel<T>, data: &SparseDataset<T>, lambda: T) -> Result<T, ModelError> {
    prepare(m, data, lambda)?;
    Ok(evaluate(m, data, ObjectiveKind::ExactSoftmax, lambda, None, false)?.value)
}

/// `-sum_n sum_{m != y_n} log(1 + e^{-(f_{y_n} - f_m)}) - lambda/2 ||W||^2`.
pub fn ove_loglik<T: Scalar>(m: &LinearModel<T>, data: &SparseDataset<T>, lambda: T) -> Result<T, ModelError> {
    prepare(m, data, lambda)?;
    Ok(evaluate(m, data, ObjectiveKind::Ove, lambda, None, false)?.value)
}

/// `sum_n [f_{y_n} - alpha_n - sum_m log(1 + e^{f_m - alpha_n})] - lambda/2 ||W||^2`.
pub fn bouchard_loglik<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    alphas: &[T],
    lambda: T,
) -> Result<T, ModelError> {
    prepare(m, data, lambda)?;
    Objective::bouchard(lambda, alphas.to_vec()).validate(data.len())?;
    Ok(evaluate(m, data, ObjectiveKind::Bouchard, lambda, Some(AlphaSource::Given(alphas)), false)?.value)
}

/// Per-instance minimizers of the log-sum-exp upper bound under the current model.
pub fn optimal_alphas<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    solver: &AlphaSolver,
) -> Result<Vec<T>, ModelError> {
    m.check_data(data)?;
    let mut scores = vec![T::zero(); m.classes];
    data.rows()
        .iter()
        .map(|ex| {
            m.scores_into(&ex.x, &mut scores);
            Ok(solver.solve(&scores)?)
        })
        .collect()
}

/// Value of `obj` at `m`.
pub fn objective_value<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    obj: &Objective<T>,
) -> Result<T, ModelError> {
    prepare(m, data, obj.lambda)?;
    obj.validate(data.len())?;
    let source = obj.alphas.as_deref().map(AlphaSource::Given);
    Ok(evaluate(m, data, obj.kind, obj.lambda, source, false)?.value)
}

/// Exact gradient of `obj` at `m`. For the variational objective the alphas
/// stored in `obj` are held fixed.
pub fn full_gradient<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    obj: &Objective<T>,
) -> Result<Gradient<T>, ModelError> {
    Ok(value_and_gradient(m, data, obj)?.1)
}

pub fn value_and_gradient<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    obj: &Objective<T>,
) -> Result<(T, Gradient<T>), ModelError> {
    prepare(m, data, obj.lambda)?;
    obj.validate(data.len())?;
    let source = obj.alphas.as_deref().map(AlphaSource::Given);
    let ev = evaluate(m, data, obj.kind, obj.lambda, source, true)?;
    Ok((ev.value, ev.grad.expect("gradient requested")))
}

/// Result of a deterministic full-batch fit.
#[derive(Debug, Clone)]
pub struct FullBatchFit<T: Scalar> {
    pub model: LinearModel<T>,
    /// The objective at the optimum; for the variational kind it carries the
    /// alphas that are optimal for the returned model.
    pub objective: Objective<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub trace: Vec<(usize, f64)>,
}

/// Maximizes the chosen objective over all parameters from `init`.
///
/// For the variational bound every evaluation first re-solves each instance's
/// alpha exactly, so the optimizer climbs `max_alpha F(w, alpha)`. That
/// function is concave in `w` and its gradient is the partial gradient at the
/// optimal alphas.
pub fn fit_full_batch<T: Scalar>(
    init: LinearModel<T>,
    data: &SparseDataset<T>,
    kind: ObjectiveKind,
    lambda: T,
    opts: &AscentOptions,
    solver: &AlphaSolver,
) -> Result<FullBatchFit<T>, ModelError> {
    prepare(&init, data, lambda)?;
    let mut work = init.clone();
    let source = (kind == ObjectiveKind::Bouchard).then_some(AlphaSource::Solve(solver));
    let out = maximize(init.to_flat(), opts, |x: &[T], g: &mut [T]| {
        work.set_flat(x);
        let ev = evaluate(&work, data, kind, lambda, source, true)?;
        let grad = ev.grad.expect("gradient requested");
        let (gw, gb) = g.split_at_mut(grad.weights.len());
        gw.copy_from_slice(&grad.weights);
        gb.copy_from_slice(&grad.biases);
        Ok::<_, ModelError>(ev.value)
    })?;
    if !out.converged {
        return Err(ModelError::NotConverged { iterations: out.iterations, grad_norm: out.grad_norm.as_f64() });
    }
    let mut model = init;
    model.set_flat(&out.x);
    let objective = match kind {
        ObjectiveKind::ExactSoftmax => Objective::exact(lambda),
        ObjectiveKind::Ove => Objective::ove(lambda),
        ObjectiveKind::Bouchard => Objective::bouchard(lambda, optimal_alphas(&model, data, solver)?),
    };
    Ok(FullBatchFit {
        model,
        objective,
        value: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        trace: out.trace,
    })
}

/// Evaluates the profile objective `max_alpha F(w, alpha)` for the variational
/// kind and the plain objective otherwise.
pub fn maximized_bound<T: Scalar>(
    m: &LinearModel<T>,
    data: &SparseDataset<T>,
    kind: ObjectiveKind,
    lambda: T,
    solver: &AlphaSolver,
) -> Result<T, ModelError> {
    prepare(m, data, lambda)?;
    let source = (kind == ObjectiveKind::Bouchard).then_some(AlphaSource::Solve(solver));
    Ok(evaluate(m, data, kind, lambda, source, false)?.value)
}
