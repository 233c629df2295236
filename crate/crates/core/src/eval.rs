//! Scores for comparing trained models and smoothing of training traces.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SparseDataset;
use crate::model::{LinearModel, ModelError};
use crate::scalar::Scalar;

/// Probabilities are floored here before taking logs.
pub const NLPD_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("row {row} is not a probability vector")]
    InvalidProbabilities { row: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("reference parameters are all zero")]
    ZeroReference,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// Closeness to the reference model; absent for the reference itself.
    pub norm: Option<f64>,
    pub error: f64,
    pub nlpd: f64,
    /// Maximized training objective, when known.
    pub bound_final: Option<f64>,
}

/// Removes the shift shared by all classes: the per-feature mean across
/// classes from the weights and the mean from the biases.
pub fn gauge_fix<T: Scalar>(m: &LinearModel<T>) -> LinearModel<T> {
    let (k, d) = (m.classes(), m.features());
    let kf = T::of_usize(k);
    let mut out = m.clone();
    for j in 0..d {
        let mean = (0..k).map(|c| m.row(c)[j]).sum::<T>() / kf;
        for c in 0..k {
            out.row_mut(c)[j] -= mean;
        }
    }
    let mean = m.biases().iter().copied().sum::<T>() / kf;
    out.biases_mut().iter_mut().for_each(|b| *b -= mean);
    out
}

/// `||w_ref - w|| / ||w_ref||`, Euclidean over all weights and biases, after
/// gauge-fixing both models.
pub fn param_norm<T: Scalar>(w_ref: &LinearModel<T>, w: &LinearModel<T>) -> Result<f64, EvalError> {
    if (w_ref.classes(), w_ref.features()) != (w.classes(), w.features()) {
        return Err(EvalError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            w_ref.classes(),
            w_ref.features(),
            w.classes(),
            w.features()
        )));
    }
    let (a, b) = (gauge_fix(w_ref).to_flat(), gauge_fix(w).to_flat());
    let den: f64 = a.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}

pub fn error_rate(preds: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch(preds.len(), truth.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let wrong = preds.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / preds.len() as f64)
}

/// Mean of `-ln p(truth)` with probabilities floored at [`NLPD_FLOOR`].
pub fn nlpd(prob_rows: &[Vec<f64>], truth: &[usize]) -> Result<f64, EvalError> {
    if prob_rows.len() != truth.len() {
        return Err(EvalError::LengthMismatch(prob_rows.len(), truth.len()));
    }
    if prob_rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (row, (p, &t)) in prob_rows.iter().zip(truth).enumerate() {
        let valid = t < p.len()
            && p.iter().all(|&v| (0.0..=1.0 + 1e-9).contains(&v))
            && (p.iter().sum::<f64>() - 1.0).abs() < 1e-6;
        if !valid {
            return Err(EvalError::InvalidProbabilities { row });
        }
        total -= p[t].max(NLPD_FLOOR).ln();
    }
    Ok(total / truth.len() as f64)
}

/// Test error and nlpd of a model's softmax predictions.
pub fn evaluate_model<T: Scalar>(m: &LinearModel<T>, test: &SparseDataset<T>) -> Result<(f64, f64), EvalError> {
    let mut preds = Vec::with_capacity(test.len());
    let mut probs = Vec::with_capacity(test.len());
    for ex in test.rows() {
        let p: Vec<f64> = m.predict_proba(&ex.x)?.iter().map(|v| v.as_f64()).collect();
        preds.push(crate::model::argmax(&p));
        probs.push(p);
    }
    let truth = test.labels();
    Ok((error_rate(&preds, &truth)?, nlpd(&probs, &truth)?))
}

/// Trailing moving average; the window is truncated at the start so the
/// output has the input's length.
pub fn smooth_trace(trace: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(trace.len());
    let mut sum = 0.0;
    for (i, &v) in trace.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= trace[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Keeps every `factor`-th point, ending each block on its last element.
pub fn thin(trace: &[f64], factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    trace.iter().skip(factor - 1).step_by(factor).copied().collect()
}

pub fn is_non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

pub fn is_non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

/// `method,norm,error,nlpd` with an empty norm for the reference.
pub fn write_table_csv<W: Write>(reports: &[MethodReport], mut w: W) -> io::Result<()> {
    writeln!(w, "method,norm,error,nlpd")?;
    for r in reports {
        let norm = r.norm.map(|n| format!("{n:.4}")).unwrap_or_default();
        writeln!(w, "{},{},{:.4},{:.4}", r.method, norm, r.error, r.nlpd)?;
    }
    Ok(())
}
