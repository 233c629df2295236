//! Doubly stochastic training: minibatches of instances crossed with a uniform
//! subsample of the remaining classes for each instance.
//!
//! Weights are stored as `W = g * V` with one global scale `g`, so L2 decay
//! costs O(1) per step and every update only touches the rows of the labels
//! and sampled classes. Biases are not regularized and are stored directly.

use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{log_sigmoid, lse, sigmoid, softplus, AlphaSolver, BoundsError};
use crate::data::{Example, SparseDataset};
use crate::model::{Gradient, LinearModel, ModelError, ObjectiveKind, SparseVector};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("cannot sample {requested} of the {available} remaining classes")]
    TooMany { requested: usize, available: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("non-finite value at iteration {iteration} (epoch {epoch}); try a smaller learning rate")]
    NonFinite { iteration: u64, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Draws `s` distinct classes uniformly without replacement from
/// `{0..classes} \ {y}`.
pub fn sample_remaining<R: rand::Rng + ?Sized>(
    classes: usize,
    y: usize,
    s: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SamplingError> {
    if y >= classes {
        return Err(SamplingError::ClassOutOfRange { class: y, classes });
    }
    let available = classes - 1;
    if s > available {
        return Err(SamplingError::TooMany { requested: s, available });
    }
    Ok(rand::seq::index::sample(rng, available, s).into_iter().map(|i| if i >= y { i + 1 } else { i }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Remaining classes sampled per instance; only used by the OVE objective.
    pub remaining: usize,
    pub epochs: usize,
    pub lr0: f64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub lambda: f64,
    pub seed: u64,
    pub objective: ObjectiveKind,
    /// Steps per trace entry.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 200,
            remaining: 1,
            epochs: 10,
            lr0: 0.01,
            lr_decay: 0.9,
            lambda: 1.0,
            seed: 0,
            objective: ObjectiveKind::Ove,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.log_every == 0 {
            return bad("log interval must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr decay must be in (0, 1], got {}", self.lr_decay));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if classes < 2 {
            return bad(format!("need at least 2 classes, got {classes}"));
        }
        if self.objective == ObjectiveKind::Ove && (self.remaining == 0 || self.remaining > classes - 1) {
            return bad(format!("remaining classes must be in 1..={}, got {}", classes - 1, self.remaining));
        }
        Ok(())
    }
}

/// Sparse gradient of a minibatch: each term adds `coef * x_n` to a weight row
/// and `coef` to that row's bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDelta<T> {
    /// `(class, position in batch, coefficient)`.
    pub terms: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SparseDelta<T> {
    /// Distinct rows touched, ascending.
    pub fn rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.terms.iter().map(|t| t.0).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    pub fn to_dense(&self, batch: &[Example<T>], classes: usize, features: usize) -> Gradient<T> {
        let mut g = Gradient::zeros(classes, features);
        for &(k, n, c) in &self.terms {
            batch[n].x.axpy_into(c, &mut g.weights[k * features..(k + 1) * features]);
            g.biases[k] += c;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGradient<T> {
    pub delta: SparseDelta<T>,
    /// Unbiased estimate of the batch's summed data term (no penalty).
    pub bound: T,
    /// Classes sampled for each instance (empty for objectives that use all classes).
    pub sampled: Vec<Vec<usize>>,
}

/// Data-term gradient of one minibatch. `score(k, x)` returns `f_k(x)`.
fn batch_gradient<T: Scalar, R: rand::Rng + ?Sized>(
    score: impl Fn(usize, &SparseVector<T>) -> T,
    classes: usize,
    batch: &[&Example<T>],
    kind: ObjectiveKind,
    remaining: usize,
    solver: &AlphaSolver,
    rng: &mut R,
) -> Result<StochasticGradient<T>, TrainError> {
    let mut terms = Vec::new();
    let mut sampled = Vec::with_capacity(batch.len());
    let mut bound = T::zero();
    let mut f = vec![T::zero(); classes];
    for (n, ex) in batch.iter().enumerate() {
        let y = ex.label;
        match kind {
            ObjectiveKind::Ove => {
                let ms = sample_remaining(classes, y, remaining, rng)?;
                let scale = T::of_usize(classes - 1) / T::of_usize(remaining);
                let fy = score(y, &ex.x);
                let mut cy = T::zero();
                for &m in &ms {
                    let d = fy - score(m, &ex.x);
                    bound += scale * log_sigmoid(d);
                    let w = scale * sigmoid(-d);
                    cy += w;
                    terms.push((m, n, -w));
                }
                terms.push((y, n, cy));
                sampled.push(ms);
            }
            ObjectiveKind::ExactSoftmax => {
                for (k, fk) in f.iter_mut().enumerate() {
                    *fk = score(k, &ex.x);
                }
                let z = lse(&f);
                bound += f[y] - z;
                for (k, &fk) in f.iter().enumerate() {
                    let ind = if k == y { T::one() } else { T::zero() };
                    terms.push((k, n, ind - (fk - z).exp()));
                }
                sampled.push(Vec::new());
            }
            ObjectiveKind::Bouchard => {
                for (k, fk) in f.iter_mut().enumerate() {
                    *fk = score(k, &ex.x);
                }
                let a = solver.solve(&f)?;
                bound += f[y] - a - f.iter().map(|&fk| softplus(fk - a)).sum::<T>();
                for (k, &fk) in f.iter().enumerate() {
                    let ind = if k == y { T::one() } else { T::zero() };
                    terms.push((k, n, ind - sigmoid(fk - a)));
                }
                sampled.push(Vec::new());
            }
        }
    }
    Ok(StochasticGradient { delta: SparseDelta { terms }, bound, sampled })
}

/// Doubly stochastic data-term gradient of `batch` at `m`. For the OVE
/// objective each sampled class term is scaled by `(K-1)/S`, which makes the
/// delta an unbiased estimate of the exact batch gradient.
pub fn stochastic_gradient<T: Scalar, R: rand::Rng + ?Sized>(
    m: &LinearModel<T>,
    batch: &[Example<T>],
    kind: ObjectiveKind,
    remaining: usize,
    rng: &mut R,
) -> Result<StochasticGradient<T>, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::InvalidConfig("empty minibatch".into()));
    }
    for ex in batch {
        if ex.label >= m.classes() {
            return Err(ModelError::LabelOutOfRange { label: ex.label, classes: m.classes() }.into());
        }
        if ex.x.dim_lower_bound() > m.features() {
            return Err(
                ModelError::FeatureOutOfRange { index: ex.x.dim_lower_bound() - 1, features: m.features() }.into()
            );
        }
    }
    if kind == ObjectiveKind::Ove && (remaining == 0 || remaining >= m.classes()) {
        return Err(SamplingError::TooMany { requested: remaining, available: m.classes() - 1 }.into());
    }
    let score = |k: usize, x: &SparseVector<T>| x.dot(m.row(k)) + m.biases()[k];
    let refs: Vec<&Example<T>> = batch.iter().collect();
    batch_gradient(score, m.classes(), &refs, kind, remaining, &AlphaSolver::default(), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: u64,
    /// Mean over the logging interval of the per-step unbiased estimates of the
    /// per-instance objective (data term / N minus the penalty / N).
    pub raw_bound_estimate: f64,
    pub lr: f64,
    pub epoch: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub entries: Vec<TraceEntry>,
}

impl TrainTrace {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.raw_bound_estimate).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iteration,raw_bound_estimate,lr,epoch,elapsed_ms")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{},{:.3}", e.iteration, e.raw_bound_estimate, e.lr, e.epoch, e.elapsed_ms)?;
        }
        Ok(())
    }
}

/// Counters describing how much of the model each step touched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: u64,
    /// Sum over steps of the number of distinct weight rows updated.
    pub row_touches: u64,
    pub max_rows_per_step: usize,
    /// Individual weight coordinates written.
    pub coord_updates: u64,
    /// Times the global scale was folded back into the weights.
    pub rescales: u64,
}

/// What one step did, for instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<'a, T: Scalar> {
    pub iteration: u64,
    pub batch: Vec<&'a Example<T>>,
    pub sampled: &'a [Vec<usize>],
    /// Distinct weight rows written, ascending.
    pub touched_rows: &'a [usize],
    pub coord_updates: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub model: LinearModel<T>,
    pub trace: TrainTrace,
    pub stats: TrainStats,
}

/// Weights as `scale * v`.
struct ScaledWeights<T> {
    v: Vec<T>,
    scale: T,
    sumsq: f64,
}

impl<T: Scalar> ScaledWeights<T> {
    fn new(v: Vec<T>) -> Self {
        let sumsq = v.iter().map(|x| x.as_f64().powi(2)).sum();
        ScaledWeights { v, scale: T::one(), sumsq }
    }

    fn fold_scale(&mut self) {
        let s = self.scale;
        self.v.iter_mut().for_each(|x| *x *= s);
        self.scale = T::one();
        self.resum();
    }

    fn resum(&mut self) {
        self.sumsq = self.v.iter().map(|x| x.as_f64().powi(2)).sum();
    }

    fn sq_norm(&self) -> f64 {
        self.scale.as_f64().powi(2) * self.sumsq
    }
}

pub fn train<T: Scalar>(
    init: LinearModel<T>,
    data: &SparseDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    train_observed(init, data, cfg, None)
}

/// [`train`] with a callback invoked after every step.
pub fn train_observed<T: Scalar>(
    init: LinearModel<T>,
    data: &SparseDataset<T>,
    cfg: &TrainConfig,
    mut observer: Option<&mut dyn FnMut(&StepRecord<'_, T>)>,
) -> Result<TrainOutcome<T>, TrainError> {
    let (classes, features) = (init.classes(), init.features());
    cfg.validate(classes)?;
    if data.classes() != classes || data.features() > features {
        return Err(ModelError::ShapeMismatch {
            model_classes: classes,
            model_features: features,
            data_classes: data.classes(),
            data_features: data.features(),
        }
        .into());
    }
    if data.is_empty() {
        return Err(TrainError::InvalidConfig("no training data".into()));
    }
    if !init.is_finite() {
        return Err(TrainError::NonFinite { iteration: 0, epoch: 0 });
    }

    let n_total = data.len();
    let rows = data.rows();
    let mut biases = init.biases().to_vec();
    let mut w = ScaledWeights::new(init.weights().to_vec());
    let mut shuffle_rng = rng::substream(cfg.seed, rng::SHUFFLE);
    let mut class_rng = rng::substream(cfg.seed, rng::CLASS_SAMPLING);
    let solver = AlphaSolver::default();
    let tiny = T::of(1e-20);
    let lambda = cfg.lambda;

    let mut order: Vec<usize> = (0..n_total).collect();
    let mut trace = TrainTrace::default();
    let mut stats = TrainStats::default();
    let mut pending = (0.0f64, 0usize);
    let mut touched: Vec<usize> = Vec::new();
    let start = Instant::now();
    let mut iteration: u64 = 0;
    let steps_per_epoch = n_total.div_ceil(cfg.batch_size);
    let total_steps = (steps_per_epoch * cfg.epochs) as u64;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr0 * cfg.lr_decay.powi(epoch as i32);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            iteration += 1;
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &rows[i]).collect();
            let (v, scale, b) = (&w.v, w.scale, &biases);
            let score = |k: usize, x: &SparseVector<T>| scale * x.dot(&v[k * features..(k + 1) * features]) + b[k];
            let sg = batch_gradient(score, classes, &batch, cfg.objective, cfg.remaining, &solver, &mut class_rng)?;

            let bsize = chunk.len() as f64;
            let estimate = sg.bound.as_f64() / bsize - 0.5 * lambda * w.sq_norm() / n_total as f64;
            if !estimate.is_finite() {
                return Err(TrainError::NonFinite { iteration, epoch });
            }

            // penalty share of this batch, applied to every weight through the scale
            let decay = 1.0 - lr * lambda * bsize / n_total as f64;
            if decay <= 0.0 {
                return Err(TrainError::InvalidConfig(format!("lr * lambda * b / N = {} must be < 1", 1.0 - decay)));
            }
            w.scale *= T::of(decay);
            if w.scale < tiny {
                w.fold_scale();
                stats.rescales += 1;
            }

            let step = T::of(lr) / w.scale;
            let lr_t = T::of(lr);
            let mut coords = 0u64;
            for &(k, n, c) in &sg.delta.terms {
                let x = &batch[n].x;
                let row = &mut w.v[k * features..(k + 1) * features];
                let a = step * c;
                for (j, xv) in x.iter() {
                    let old = row[j];
                    let new = old + a * xv;
                    if !new.is_finite() {
                        return Err(TrainError::NonFinite { iteration, epoch });
                    }
                    w.sumsq += new.as_f64().powi(2) - old.as_f64().powi(2);
                    row[j] = new;
                }
                coords += x.nnz() as u64;
                biases[k] += lr_t * c;
                if !biases[k].is_finite() {
                    return Err(TrainError::NonFinite { iteration, epoch });
                }
            }

            touched.clear();
            touched.extend(sg.delta.terms.iter().map(|t| t.0));
            touched.sort_unstable();
            touched.dedup();
            stats.steps += 1;
            stats.row_touches += touched.len() as u64;
            stats.max_rows_per_step = stats.max_rows_per_step.max(touched.len());
            stats.coord_updates += coords;
            if let Some(obs) = observer.as_mut() {
                obs(&StepRecord {
                    iteration,
                    batch: batch.clone(),
                    sampled: &sg.sampled,
                    touched_rows: &touched,
                    coord_updates: coords,
                });
            }

            pending.0 += estimate;
            pending.1 += 1;
            if iteration.is_multiple_of(cfg.log_every as u64) || iteration == total_steps {
                trace.entries.push(TraceEntry {
                    iteration,
                    raw_bound_estimate: pending.0 / pending.1 as f64,
                    lr,
                    epoch,
                    elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                });
                pending = (0.0, 0);
            }
        }
        // incremental sum of squares drifts with rounding
        w.resum();
    }

    w.fold_scale();
    let model = LinearModel::from_parts(classes, features, w.v, biases)?;
    Ok(TrainOutcome { model, trace, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{full_gradient, Objective};
    use rand::Rng as _;

    fn small_data(n: usize, classes: usize, features: usize, seed: u64) -> SparseDataset<f64> {
        let mut r = rng::substream(seed, "test-data");
        let rows = (0..n)
            .map(|i| {
                let dense: Vec<f64> = (0..features)
                    .map(|_| if r.random::<f64>() < 0.6 { r.random_range(-1.0..1.0) } else { 0.0 })
                    .collect();
                Example { x: SparseVector::from_dense(&dense).unwrap(), label: i % classes }
            })
            .collect();
        SparseDataset::new(rows, classes, features, "small").unwrap()
    }

    fn random_model(classes: usize, features: usize, seed: u64) -> LinearModel<f64> {
        let mut r = rng::substream(seed, "test-model");
        let w = (0..classes * features).map(|_| r.random_range(-1.0..1.0)).collect();
        let b = (0..classes).map(|_| r.random_range(-1.0..1.0)).collect();
        LinearModel::from_parts(classes, features, w, b).unwrap()
    }

    #[test]
    fn sample_remaining_forced_cases() {
        let mut r = rng::substream(0, "t");
        assert_eq!(sample_remaining(2, 0, 1, &mut r).unwrap(), vec![1]);
        let mut all = sample_remaining(5, 2, 4, &mut r).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 3, 4]);
        assert!(matches!(sample_remaining(5, 2, 5, &mut r), Err(SamplingError::TooMany { .. })));
        assert!(sample_remaining(5, 5, 1, &mut r).is_err());
    }

    #[test]
    fn sample_remaining_inclusion_frequency() {
        // each eligible class is included with probability S/(K-1) = 1/3
        let (k, s, y, draws) = (10, 3, 4, 100_000);
        let mut r = rng::substream(11, "t");
        let mut counts = vec![0usize; k];
        for _ in 0..draws {
            let ms = sample_remaining(k, y, s, &mut r).unwrap();
            let mut sorted = ms.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), s);
            for m in ms {
                counts[m] += 1;
            }
        }
        assert_eq!(counts[y], 0);
        let p = 1.0 / 3.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (m, &c) in counts.iter().enumerate().filter(|&(m, _)| m != y) {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sd, "class {m}: {c}");
        }
    }

    #[test]
    fn full_sampling_gives_exact_batch_gradient() {
        let data = small_data(12, 4, 5, 1);
        let m = random_model(4, 5, 2);
        let mut r = rng::substream(3, "t");
        for kind in [ObjectiveKind::Ove, ObjectiveKind::ExactSoftmax] {
            let sg = stochastic_gradient(&m, data.rows(), kind, 3, &mut r).unwrap();
            let dense = sg.delta.to_dense(data.rows(), 4, 5);
            let obj = match kind {
                ObjectiveKind::Ove => Objective::ove(0.0),
                _ => Objective::exact(0.0),
            };
            let exact = full_gradient(&m, &data, &obj).unwrap();
            for (a, b) in dense.to_flat().iter().zip(exact.to_flat()) {
                assert!((a - b).abs() < 1e-12, "{kind:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_model_single_instance_delta() {
        let x = SparseVector::new(vec![0, 2], vec![1.0, -2.0]).unwrap();
        let batch = [Example { x: x.clone(), label: 1 }];
        let m = LinearModel::<f64>::zeros(5, 3);
        let mut r = rng::substream(4, "t");
        let sg = stochastic_gradient(&m, &batch, ObjectiveKind::Ove, 1, &mut r).unwrap();
        let sampled = sg.sampled[0][0];
        assert_eq!(sg.delta.rows(), {
            let mut v = vec![1, sampled];
            v.sort_unstable();
            v
        });
        let g = sg.delta.to_dense(&batch, 5, 3);
        // (K-1) * sigma(0) * x on the label row, its negative on the sampled row
        assert_eq!(g.weights[3..6], [2.0, 0.0, -4.0]);
        assert_eq!(g.weights[sampled * 3..sampled * 3 + 3], [-2.0, 0.0, 4.0]);
        assert!((sg.bound - 4.0 * (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn stochastic_gradient_is_unbiased() {
        let data = small_data(6, 5, 3, 5);
        let m = random_model(5, 3, 6);
        let exact = full_gradient(&m, &data, &Objective::ove(0.0)).unwrap().to_flat();
        let draws = 10_000;
        let mut r = rng::substream(7, "t");
        let mut sum = vec![0.0; exact.len()];
        let mut sumsq = vec![0.0; exact.len()];
        for _ in 0..draws {
            let sg = stochastic_gradient(&m, data.rows(), ObjectiveKind::Ove, 1, &mut r).unwrap();
            for (i, g) in sg.delta.to_dense(data.rows(), 5, 3).to_flat().into_iter().enumerate() {
                sum[i] += g;
                sumsq[i] += g * g;
            }
        }
        for i in 0..exact.len() {
            let mean = sum[i] / draws as f64;
            let var = (sumsq[i] / draws as f64 - mean * mean).max(0.0);
            let se = (var / draws as f64).sqrt();
            assert!((mean - exact[i]).abs() <= 3.0 * se + 1e-12, "coord {i}: {mean} vs {}", exact[i]);
        }
    }

    #[test]
    fn full_batch_full_sampling_is_gradient_ascent() {
        let data = small_data(10, 3, 4, 8);
        let cfg = TrainConfig {
            batch_size: 10,
            remaining: 2,
            epochs: 15,
            lr0: 0.05,
            lr_decay: 1.0,
            lambda: 0.7,
            seed: 1,
            objective: ObjectiveKind::Ove,
            log_every: 1,
        };
        let init = random_model(3, 4, 9);
        let out = train(init.clone(), &data, &cfg).unwrap();

        // eager oracle: W <- W + lr * grad, with the penalty decaying every weight
        let mut m = init;
        for _ in 0..cfg.epochs {
            let g = full_gradient(&m, &data, &Objective::ove(cfg.lambda)).unwrap();
            let flat: Vec<f64> = m.to_flat().iter().zip(g.to_flat()).map(|(w, g)| w + cfg.lr0 * g).collect();
            m.set_flat(&flat);
        }
        for (a, b) in out.model.to_flat().iter().zip(m.to_flat()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert_eq!(out.trace.entries.len(), 15);
    }

    #[test]
    fn lazy_decay_matches_eager_decay() {
        // minibatches with sampled classes: replay the same steps eagerly
        let data = small_data(20, 6, 5, 10);
        let cfg = TrainConfig {
            batch_size: 3,
            remaining: 2,
            epochs: 4,
            lr0: 0.1,
            lr_decay: 0.8,
            lambda: 2.0,
            seed: 3,
            objective: ObjectiveKind::Ove,
            log_every: 5,
        };
        let init = random_model(6, 5, 11);
        let mut eager = init.clone();
        let out = train(init.clone(), &data, &cfg).unwrap();

        let mut shuffle_rng = rng::substream(cfg.seed, rng::SHUFFLE);
        let mut class_rng = rng::substream(cfg.seed, rng::CLASS_SAMPLING);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..cfg.epochs {
            let lr = cfg.lr0 * cfg.lr_decay.powi(epoch as i32);
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<Example<f64>> = chunk.iter().map(|&i| data.rows()[i].clone()).collect();
                let sg =
                    stochastic_gradient(&eager, &batch, ObjectiveKind::Ove, cfg.remaining, &mut class_rng).unwrap();
                let g = sg.delta.to_dense(&batch, 6, 5);
                let decay = 1.0 - lr * cfg.lambda * batch.len() as f64 / data.len() as f64;
                for (w, d) in eager.weights_mut().iter_mut().zip(&g.weights) {
                    *w = decay * *w + lr * d;
                }
                for (b, d) in eager.biases_mut().iter_mut().zip(&g.biases) {
                    *b += lr * d;
                }
            }
        }
        for (a, b) in out.model.to_flat().iter().zip(eager.to_flat()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn training_is_deterministic_and_sparse() {
        let data = small_data(40, 8, 6, 12);
        let cfg = TrainConfig {
            batch_size: 4,
            remaining: 2,
            epochs: 3,
            lr0: 0.2,
            seed: 5,
            log_every: 3,
            ..Default::default()
        };
        let mut max_rows = 0;
        let mut check = |rec: &StepRecord<'_, f64>| {
            let mut allowed: Vec<usize> = rec.batch.iter().map(|e| e.label).collect();
            allowed.extend(rec.sampled.iter().flatten());
            assert!(rec.touched_rows.iter().all(|r| allowed.contains(r)));
            max_rows = max_rows.max(rec.touched_rows.len());
        };
        let a = train_observed(LinearModel::zeros(8, 6), &data, &cfg, Some(&mut check)).unwrap();
        let b = train(LinearModel::zeros(8, 6), &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.stats, b.stats);
        assert!(max_rows <= 4 * 3);
        assert_eq!(a.stats.max_rows_per_step, max_rows);
        let its: Vec<u64> = a.trace.entries.iter().map(|e| e.iteration).collect();
        assert!(its.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*its.last().unwrap(), 30);

        let c = train(LinearModel::zeros(8, 6), &data, &TrainConfig { seed: 6, ..cfg.clone() }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn other_objectives_and_guards() {
        let data = small_data(30, 4, 3, 13);
        for objective in [ObjectiveKind::ExactSoftmax, ObjectiveKind::Bouchard] {
            let cfg = TrainConfig { batch_size: 5, epochs: 20, lr0: 0.1, objective, ..Default::default() };
            let out = train(LinearModel::zeros(4, 3), &data, &cfg).unwrap();
            let v = out.trace.values();
            assert!(v.last().unwrap() > v.first().unwrap());
        }
        let huge = TrainConfig { batch_size: 30, epochs: 50, lr0: 1e300, lambda: 0.0, ..Default::default() };
        assert!(matches!(train(random_model(4, 3, 1), &data, &huge), Err(TrainError::NonFinite { .. })));
        let bad = TrainConfig { remaining: 4, ..Default::default() };
        assert!(matches!(train(LinearModel::zeros(4, 3), &data, &bad), Err(TrainError::InvalidConfig(_))));
        let bad = TrainConfig { lr_decay: 0.0, ..Default::default() };
        assert!(bad.validate(4).is_err());
    }
}
