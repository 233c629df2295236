//! Estimation of categorical probabilities from label counts alone, with the
//! scores `f_k` as free parameters.
//!
//! Four estimators share one result type:
//!
//! * [`exact_mle`]: the closed form `f_k = log N_k`;
//! * [`ove_fit`]: full-batch maximization of the one-vs-each surrogate,
//!   whose optimum coincides with the exact MLE;
//! * [`bouchard_fit`]: maximization of the variational-bound surrogate with one
//!   shared alpha, which is biased towards large classes;
//! * [`ove_sgd_fit`]: the doubly stochastic estimator that subsamples both the
//!   observations and the remaining classes.
//!
//! Scores are reported in the gauge `sum_k f_k = 0` over the fitted classes.
//! Classes with no observations are excluded from fitting and reported with
//! probability 0 and no score.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, log_sigmoid, lse, sigmoid, softmax_into, softplus, AlphaSolver, BoundsError};
use crate::optim::{maximize, AscentOptions};
use crate::rng;
use crate::scalar::Scalar;
use crate::sgd::{sample_remaining, SamplingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonparamError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("all counts are zero")]
    AllZero,
    #[error("expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("label stream is empty")]
    EmptyStream,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite scores after {iteration} stochastic updates")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Per-class observation counts `N_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self, NonparamError> {
        if counts.len() < 2 {
            return Err(NonparamError::TooFewClasses(counts.len()));
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(NonparamError::AllZero);
        }
        Ok(CountVector { counts, total })
    }

    /// Tallies 0-based labels.
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self, NonparamError> {
        let mut counts = vec![0u64; classes];
        for &label in labels {
            *counts.get_mut(label).ok_or(NonparamError::LabelOutOfRange { label, classes })? += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Indices of classes with at least one observation.
    pub fn observed(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&k| self.counts[k] > 0).collect()
    }

    /// Empirical frequencies `N_k / N`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    fn restricted(&self, keep: &[usize]) -> Vec<u64> {
        keep.iter().map(|&k| self.counts[k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Ove,
    OveSgd,
    Bouchard,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Ove => "ove",
            Method::OveSgd => "ove_sgd",
            Method::Bouchard => "bouchard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct EstimationResult<T: Scalar> {
    pub method: Method,
    /// Gauge-fixed scores; `None` for excluded (zero-count) classes.
    pub f_hat: Vec<Option<T>>,
    /// Exact softmax of `f_hat`, with 0 for excluded classes.
    pub probs: Vec<T>,
    /// `(iteration, value)`: the objective for full-batch fits, the L1 error
    /// against the reference (or the bound estimate) for the stochastic fit.
    pub trace: Vec<(usize, f64)>,
    /// Shared variational parameter, in the same gauge as `f_hat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<T>,
}

impl<T: Scalar> EstimationResult<T> {
    fn assemble(method: Method, classes: usize, keep: &[usize], mut f: Vec<T>, trace: Vec<(usize, f64)>) -> Self {
        let shift = gauge_shift(&f);
        for v in f.iter_mut() {
            *v -= shift;
        }
        let mut p = vec![T::zero(); f.len()];
        softmax_into(&f, &mut p);
        let mut f_hat = vec![None; classes];
        let mut probs = vec![T::zero(); classes];
        for (i, &k) in keep.iter().enumerate() {
            f_hat[k] = Some(f[i]);
            probs[k] = p[i];
        }
        EstimationResult { method, f_hat, probs, trace, alpha: None }
    }

    /// L1 distance between `probs` and `reference`.
    pub fn l1_error(&self, reference: &[f64]) -> f64 {
        self.probs.iter().zip(reference).map(|(&p, &r)| (p.as_f64() - r).abs()).sum()
    }
}

fn gauge_shift<T: Scalar>(f: &[T]) -> T {
    if f.is_empty() {
        T::zero()
    } else {
        f.iter().copied().sum::<T>() / T::of_usize(f.len())
    }
}

fn check_shape<T>(f: &[T], c: &CountVector) -> Result<(), NonparamError> {
    if f.len() != c.classes() {
        Err(NonparamError::ShapeMismatch { expected: c.classes(), got: f.len() })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

/// Exact log likelihood `sum_k N_k log softmax_k(f)`.
pub fn exact_log_likelihood<T: Scalar>(f: &[T], c: &CountVector) -> Result<T, NonparamError> {
    check_shape(f, c)?;
    let z = lse(f);
    Ok(c.counts.iter().zip(f).filter(|(&n, _)| n > 0).map(|(&n, &fk)| T::of(n as f64) * (fk - z)).sum())
}

/// One-vs-each lower bound on the log likelihood, `sum_k N_k ove_log_bound(f, k)`.
pub fn ove_objective<T: Scalar>(f: &[T], c: &CountVector) -> Result<T, NonparamError> {
    check_shape(f, c)?;
    Ok(ove_value(f, &c.counts))
}

fn ove_value<T: Scalar>(f: &[T], counts: &[u64]) -> T {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(k, &n)| T::of(n as f64) * bounds::ove_log_bound_slice(f, k))
        .sum()
}

/// The same objective summed over the `K(K-1)/2` pairwise likelihoods.
pub fn ove_objective_pairwise<T: Scalar>(f: &[T], c: &CountVector) -> Result<T, NonparamError> {
    check_shape(f, c)?;
    let mut total = T::zero();
    for k in 0..f.len() {
        for m in 0..k {
            total += pair_log_likelihood(f[k], f[m], c.counts[k], c.counts[m]);
        }
    }
    Ok(total)
}

/// `log P(f_k, f_m)`: the likelihood of the observations of classes `k` and `m`
/// conditioned on the label being one of the two.
pub fn pair_log_likelihood<T: Scalar>(fk: T, fm: T, nk: u64, nm: u64) -> T {
    T::of(nk as f64) * log_sigmoid(fk - fm) + T::of(nm as f64) * log_sigmoid(fm - fk)
}

/// Gradient of [`ove_objective`].
pub fn ove_gradient<T: Scalar>(f: &[T], c: &CountVector) -> Result<Vec<T>, NonparamError> {
    check_shape(f, c)?;
    let mut grad = vec![T::zero(); f.len()];
    ove_grad_into(f, &c.counts, &mut grad);
    Ok(grad)
}

fn ove_grad_into<T: Scalar>(f: &[T], counts: &[u64], grad: &mut [T]) {
    grad.iter_mut().for_each(|g| *g = T::zero());
    for k in 0..f.len() {
        for m in 0..k {
            // d/d(f_k - f_m) of the pair term
            let d = T::of(counts[k] as f64) * sigmoid(f[m] - f[k]) - T::of(counts[m] as f64) * sigmoid(f[k] - f[m]);
            grad[k] += d;
            grad[m] -= d;
        }
    }
}

/// `sum_k N_k (f_k - alpha) - N sum_m log(1 + e^{f_m - alpha})`.
pub fn bouchard_objective<T: Scalar>(f: &[T], alpha: T, c: &CountVector) -> Result<T, NonparamError> {
    check_shape(f, c)?;
    Ok(bouchard_value(f, alpha, &c.counts))
}

fn bouchard_value<T: Scalar>(f: &[T], alpha: T, counts: &[u64]) -> T {
    let n = T::of(counts.iter().sum::<u64>() as f64);
    let linear: T = counts.iter().zip(f).map(|(&nk, &fk)| T::of(nk as f64) * (fk - alpha)).sum();
    linear - n * f.iter().map(|&fm| softplus(fm - alpha)).sum::<T>()
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

pub fn exact_mle<T: Scalar>(c: &CountVector) -> EstimationResult<T> {
    let keep = c.observed();
    let f: Vec<T> = keep.iter().map(|&k| T::of(c.counts[k] as f64).ln()).collect();
    EstimationResult::assemble(Method::Exact, c.classes(), &keep, f, Vec::new())
}

/// Full-batch maximization of the OVE bound from `f = 0`.
pub fn ove_fit<T: Scalar>(c: &CountVector, opt: &AscentOptions) -> Result<EstimationResult<T>, NonparamError> {
    let keep = c.observed();
    let counts = c.restricted(&keep);
    let out = maximize(vec![T::zero(); keep.len()], opt, |f: &[T], g: &mut [T]| {
        ove_grad_into(f, &counts, g);
        Ok::<_, NonparamError>(ove_value(f, &counts))
    })?;
    if !out.converged {
        return Err(NonparamError::NotConverged { iterations: out.iterations, grad_norm: out.grad_norm.as_f64() });
    }
    Ok(EstimationResult::assemble(Method::Ove, c.classes(), &keep, out.x, out.trace))
}

/// Maximization of the variational-bound surrogate with a single shared alpha.
///
/// Alpha is re-solved exactly at every evaluation, so the ascent runs on the
/// profile objective `max_alpha F(f, alpha)`. Its gradient in `f` equals the
/// partial gradient of `F` at the optimal alpha, and the alpha component of
/// the joint gradient vanishes up to the solver tolerance.
pub fn bouchard_fit<T: Scalar>(c: &CountVector, opt: &AscentOptions) -> Result<EstimationResult<T>, NonparamError> {
    let keep = c.observed();
    let counts = c.restricted(&keep);
    let n = T::of(c.total as f64);
    // |dF/dalpha| = N |sum sigma - 1| must also stay under grad_tol
    let solver = AlphaSolver { tol: (0.1 * opt.grad_tol / c.total as f64).min(1e-10), ..AlphaSolver::default() };

    if keep.len() == 1 {
        // no competing class: the bound is maximized as f - alpha grows without limit
        let mut res = EstimationResult::assemble(Method::Bouchard, c.classes(), &keep, vec![T::zero()], Vec::new());
        res.alpha = None;
        return Ok(res);
    }

    let out = maximize(vec![T::zero(); keep.len()], opt, |f: &[T], g: &mut [T]| {
        let alpha = solver.solve(f)?;
        for ((gk, &fk), &nk) in g.iter_mut().zip(f).zip(&counts) {
            *gk = T::of(nk as f64) - n * sigmoid(fk - alpha);
        }
        Ok::<_, NonparamError>(bouchard_value(f, alpha, &counts))
    })?;
    if !out.converged {
        return Err(NonparamError::NotConverged { iterations: out.iterations, grad_norm: out.grad_norm.as_f64() });
    }
    let alpha = solver.solve(&out.x)?;
    let shift = gauge_shift(&out.x);
    let mut res = EstimationResult::assemble(Method::Bouchard, c.classes(), &keep, out.x, out.trace);
    res.alpha = Some(alpha - shift);
    Ok(res)
}

/// Settings of the doubly stochastic estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdEstimateConfig {
    /// Observations per minibatch.
    pub batch_size: usize,
    /// Remaining classes sampled per observation.
    pub remaining: usize,
    pub lr0: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Trace every this many minibatch updates.
    pub log_every: usize,
}

impl Default for SgdEstimateConfig {
    fn default() -> Self {
        SgdEstimateConfig {
            batch_size: 100,
            remaining: 10,
            lr0: 0.5 / 100.0,
            lr_decay: 0.9,
            epochs: 20,
            seed: 0,
            log_every: 10,
        }
    }
}

/// Unbiased estimate of the OVE gradient over `batch` (0-based labels).
///
/// For each observation `k`, `remaining` classes are drawn uniformly without
/// replacement from the other `K - 1`, and each sampled pair term is scaled by
/// `(K - 1) / remaining`.
pub fn ove_sgd_gradient<T: Scalar>(
    f: &[T],
    batch: &[usize],
    remaining: usize,
    rng: &mut rng::Rng,
    grad: &mut [T],
) -> Result<(), NonparamError> {
    let classes = f.len();
    let scale = T::of_usize(classes - 1) / T::of_usize(remaining);
    grad.iter_mut().for_each(|g| *g = T::zero());
    for &k in batch {
        for m in sample_remaining(classes, k, remaining, rng)? {
            let w = scale * sigmoid(f[m] - f[k]);
            grad[k] += w;
            grad[m] -= w;
        }
    }
    Ok(())
}

/// Doubly stochastic OVE estimation over a stream of 0-based labels.
///
/// When `reference` is given, the trace holds the L1 distance between the
/// current probability estimate and the reference; otherwise it holds the
/// unbiased per-observation bound estimate of the latest minibatch.
pub fn ove_sgd_fit<T: Scalar>(
    stream: &[usize],
    classes: usize,
    cfg: &SgdEstimateConfig,
    reference: Option<&[f64]>,
) -> Result<EstimationResult<T>, NonparamError> {
    if stream.is_empty() {
        return Err(NonparamError::EmptyStream);
    }
    if classes < 2 {
        return Err(NonparamError::TooFewClasses(classes));
    }
    if cfg.remaining == 0 || cfg.remaining >= classes {
        return Err(NonparamError::InvalidConfig(format!(
            "remaining-class sample size must be in 1..={}, got {}",
            classes - 1,
            cfg.remaining
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || cfg.log_every == 0 {
        return Err(NonparamError::InvalidConfig("batch size, epochs and log interval must be positive".into()));
    }
    if !(cfg.lr0 > 0.0) || !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0) {
        return Err(NonparamError::InvalidConfig("need lr0 > 0 and lr_decay in (0, 1]".into()));
    }
    if let Some(r) = reference {
        if r.len() != classes {
            return Err(NonparamError::ShapeMismatch { expected: classes, got: r.len() });
        }
    }
    if let Some(&label) = stream.iter().find(|&&l| l >= classes) {
        return Err(NonparamError::LabelOutOfRange { label, classes });
    }

    let mut shuffle_rng = rng::substream(cfg.seed, rng::SHUFFLE);
    let mut class_rng = rng::substream(cfg.seed, rng::CLASS_SAMPLING);
    let mut f = vec![T::zero(); classes];
    let mut grad = vec![T::zero(); classes];
    let mut probs = vec![T::zero(); classes];
    let mut order: Vec<usize> = stream.to_vec();
    let mut trace = Vec::new();
    let mut lr = T::of(cfg.lr0);
    let decay = T::of(cfg.lr_decay);
    let scale = T::of_usize(classes - 1) / T::of_usize(cfg.remaining);
    let mut iteration = 0usize;

    let mut record = |f: &[T], iteration: usize, estimate: f64, trace: &mut Vec<(usize, f64)>| {
        let value = match reference {
            Some(r) => {
                softmax_into(f, &mut probs);
                probs.iter().zip(r).map(|(&p, &q)| (p.as_f64() - q).abs()).sum()
            }
            None => estimate,
        };
        trace.push((iteration, value));
    };
    // every pair term is ln(1/2) at the all-zero start
    record(&f, 0, (classes - 1) as f64 * 0.5f64.ln(), &mut trace);

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut estimate = T::zero();
            for &k in batch {
                for m in sample_remaining(classes, k, cfg.remaining, &mut class_rng)? {
                    let d = f[k] - f[m];
                    estimate += scale * log_sigmoid(d);
                    let w = scale * sigmoid(-d);
                    grad[k] += w;
                    grad[m] -= w;
                }
            }
            for (fk, &g) in f.iter_mut().zip(&grad) {
                *fk += lr * g;
            }
            iteration += 1;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(NonparamError::NonFinite { iteration });
            }
            if iteration.is_multiple_of(cfg.log_every) {
                let per_obs = estimate.as_f64() / batch.len() as f64;
                record(&f, iteration, per_obs, &mut trace);
            }
        }
        lr *= decay;
        // keep the scores centred; the bound is shift-invariant
        let shift = gauge_shift(&f);
        f.iter_mut().for_each(|v| *v -= shift);
    }
    let keep: Vec<usize> = (0..classes).collect();
    Ok(EstimationResult::assemble(Method::OveSgd, classes, &keep, f, trace))
}
