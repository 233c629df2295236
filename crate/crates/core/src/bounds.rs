//! Log-space kernels for the softmax, the one-vs-each (OVE) lower bound, the
//! hierarchical partition bounds that interpolate between the two, and the
//! variational log-sum-exp bound with its induced softmax lower bound.
//!
//! Every function here is pure. Class indices are 0-based.
//!
//! The slice-level helpers ([`lse`], [`log_sigmoid`], [`softplus`], ...) skip
//! validation and are what the model and trainer call in their inner loops.
//! The [`ScoreVector`]-level operations validate their inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("a score vector needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("score {index} is not finite")]
    NonFinite { index: usize },
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("invalid label partition: {0}")]
    InvalidPartition(String),
    #[error("variational parameter is not finite")]
    NonFiniteAlpha,
    #[error("alpha solve did not converge after {iterations} iterations (residual {residual:e})")]
    AlphaNotConverged { iterations: usize, residual: f64 },
}

/// K free log-scores, K >= 2, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ScoreVector<T: Scalar>(Vec<T>);

impl<T: Scalar> ScoreVector<T> {
    pub fn new(scores: Vec<T>) -> Result<Self, BoundsError> {
        if scores.len() < 2 {
            return Err(BoundsError::TooFewClasses(scores.len()));
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(BoundsError::NonFinite { index });
        }
        Ok(ScoreVector(scores))
    }

    pub fn from_f64(scores: &[f64]) -> Result<Self, BoundsError> {
        Self::new(scores.iter().map(|&s| T::of(s)).collect())
    }

    pub fn zeros(classes: usize) -> Result<Self, BoundsError> {
        Self::new(vec![T::zero(); classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    /// The same scores plus a constant.
    pub fn shifted(&self, c: T) -> Result<Self, BoundsError> {
        Self::new(self.0.iter().map(|&s| s + c).collect())
    }

    fn check_class(&self, k: usize) -> Result<(), BoundsError> {
        if k >= self.0.len() {
            Err(BoundsError::ClassOutOfRange { index: k, classes: self.0.len() })
        } else {
            Ok(())
        }
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for ScoreVector<T> {
    type Error = BoundsError;

    fn try_from(value: Vec<T>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl<T: Scalar> From<ScoreVector<T>> for Vec<T> {
    fn from(value: ScoreVector<T>) -> Self {
        value.0
    }
}

// ---------------------------------------------------------------------------
// Slice-level kernels
// ---------------------------------------------------------------------------

/// Numerically stable `log(sigmoid(z))`.
#[inline]
pub fn log_sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Max-shifted log-sum-exp of a non-empty slice.
pub fn lse<T: Scalar>(f: &[T]) -> T {
    let max = f.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = f.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Exact softmax of a non-empty slice into `out`.
pub fn softmax_into<T: Scalar>(f: &[T], out: &mut [T]) {
    let z = lse(f);
    for (o, &v) in out.iter_mut().zip(f) {
        *o = (v - z).exp();
    }
}

/// `sum_{m != k} log sigmoid(f_k - f_m)`.
pub fn ove_log_bound_slice<T: Scalar>(f: &[T], k: usize) -> T {
    let fk = f[k];
    f.iter().enumerate().filter(|&(m, _)| m != k).map(|(_, &fm)| log_sigmoid(fk - fm)).sum()
}

/// `alpha + sum_m log(1 + e^{f_m - alpha})`.
pub fn lse_upper_slice<T: Scalar>(f: &[T], alpha: T) -> T {
    alpha + f.iter().map(|&v| softplus(v - alpha)).sum::<T>()
}

/// Settings for the 1-D convex solve behind [`optimize_alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSolver {
    pub max_iter: usize,
    /// Target on `|sum_m sigmoid(f_m - alpha) - 1|`.
    pub tol: f64,
}

impl Default for AlphaSolver {
    fn default() -> Self {
        AlphaSolver { max_iter: 200, tol: 1e-10 }
    }
}

impl AlphaSolver {
    /// Minimizes `lse_upper_slice(f, .)` by driving `sum_m sigmoid(f_m - alpha)` to 1.
    ///
    /// The residual is strictly decreasing in alpha and changes sign on
    /// `[min f - log K, max f + log K]`, so a bracket always exists. Newton
    /// steps are taken from `mean(f)` and replaced by bisection whenever they
    /// leave the bracket or fail to halve the previous step.
    pub fn solve<T: Scalar>(&self, f: &[T]) -> Result<T, BoundsError> {
        let k = f.len();
        if k < 2 {
            return Err(BoundsError::TooFewClasses(k));
        }
        let log_k = T::of_usize(k).ln();
        let (min, max) = f.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mut lo = min - log_k;
        let mut hi = max + log_k;
        let tol = T::of(self.tol).max(T::tol_floor());

        let mean = f.iter().copied().sum::<T>() / T::of_usize(k);
        let mut alpha = mean.max(lo).min(hi);
        let mut residual = T::infinity();
        let mut last_step = hi - lo;
        for _ in 0..self.max_iter {
            let mut sum = T::zero();
            let mut slope = T::zero();
            for &v in f {
                let s = sigmoid(v - alpha);
                sum += s;
                slope += s * (T::one() - s);
            }
            residual = sum - T::one();
            if residual.abs() <= tol {
                return Ok(alpha);
            }
            if residual > T::zero() {
                lo = alpha;
            } else {
                hi = alpha;
            }
            // no representable point left strictly inside the bracket
            if hi - lo <= T::epsilon() * T::of(4.0) * alpha.abs().max(T::one()) {
                return Ok(alpha);
            }
            // Newton steps must at least halve the previous step, otherwise
            // they can bounce between the bracket ends without shrinking it
            let newton = alpha + residual / slope;
            let next = if slope > T::zero()
                && newton > lo
                && newton < hi
                && (newton - alpha).abs() * T::of(2.0) <= last_step
            {
                newton
            } else {
                (lo + hi) * T::half()
            };
            last_step = (next - alpha).abs();
            alpha = next;
        }
        Err(BoundsError::AlphaNotConverged { iterations: self.max_iter, residual: residual.as_f64() })
    }
}

// ---------------------------------------------------------------------------
// Validated operations
// ---------------------------------------------------------------------------

pub fn log_sum_exp<T: Scalar>(f: &ScoreVector<T>) -> T {
    lse(f.as_slice())
}

pub fn softmax_prob<T: Scalar>(f: &ScoreVector<T>, k: usize) -> Result<T, BoundsError> {
    f.check_class(k)?;
    Ok((f.0[k] - lse(&f.0)).exp())
}

pub fn log_softmax_prob<T: Scalar>(f: &ScoreVector<T>, k: usize) -> Result<T, BoundsError> {
    f.check_class(k)?;
    Ok(f.0[k] - lse(&f.0))
}

pub fn softmax<T: Scalar>(f: &ScoreVector<T>) -> Vec<T> {
    let mut out = vec![T::zero(); f.len()];
    softmax_into(&f.0, &mut out);
    out
}

/// One-vs-each lower bound on `log p(y = k)`.
pub fn ove_log_bound<T: Scalar>(f: &ScoreVector<T>, k: usize) -> Result<T, BoundsError> {
    f.check_class(k)?;
    Ok(ove_log_bound_slice(&f.0, k))
}

/// Target class plus a partition of the remaining classes into blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPartition {
    classes: usize,
    target: usize,
    blocks: Vec<Vec<usize>>,
}

impl LabelPartition {
    pub fn new(classes: usize, target: usize, blocks: Vec<Vec<usize>>) -> Result<Self, BoundsError> {
        let bad = |msg: String| Err(BoundsError::InvalidPartition(msg));
        if target >= classes {
            return bad(format!("target {target} out of range for {classes} classes"));
        }
        let mut seen = vec![false; classes];
        seen[target] = true;
        for block in &blocks {
            if block.is_empty() {
                return bad("empty block".into());
            }
            for &m in block {
                if m >= classes {
                    return bad(format!("class {m} out of range"));
                }
                if seen[m] {
                    return bad(format!("class {m} appears twice or is the target"));
                }
                seen[m] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return bad(format!("class {missing} is not covered"));
        }
        Ok(LabelPartition { classes, target, blocks })
    }

    /// One block per remaining class; reproduces the OVE bound.
    pub fn singletons(classes: usize, target: usize) -> Result<Self, BoundsError> {
        let blocks = (0..classes).filter(|&m| m != target).map(|m| vec![m]).collect();
        Self::new(classes, target, blocks)
    }

    /// A single block holding every remaining class; reproduces the exact probability.
    pub fn single_block(classes: usize, target: usize) -> Result<Self, BoundsError> {
        let block = (0..classes).filter(|&m| m != target).collect();
        Self::new(classes, target, vec![block])
    }

    /// Merges blocks `i` and `j` into one.
    pub fn merge(&self, i: usize, j: usize) -> Result<Self, BoundsError> {
        let n = self.blocks.len();
        if i == j || i >= n || j >= n {
            return Err(BoundsError::InvalidPartition(format!("cannot merge blocks {i} and {j} of {n}")));
        }
        let (lo, hi) = (i.min(j), i.max(j));
        let mut blocks = self.blocks.clone();
        let moved = blocks.remove(hi);
        blocks[lo].extend(moved);
        Ok(LabelPartition { blocks, ..self.clone() })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// `sum_B log[e^{f_k} / (e^{f_k} + sum_{m in B} e^{f_m})]`.
pub fn hierarchical_log_bound<T: Scalar>(f: &ScoreVector<T>, p: &LabelPartition) -> Result<T, BoundsError> {
    if p.classes != f.len() {
        return Err(BoundsError::InvalidPartition(format!(
            "partition over {} classes applied to {} scores",
            p.classes,
            f.len()
        )));
    }
    let fk = f.0[p.target];
    let mut buf = Vec::new();
    let mut total = T::zero();
    for block in &p.blocks {
        buf.clear();
        buf.push(fk);
        buf.extend(block.iter().map(|&m| f.0[m]));
        total += fk - lse(&buf);
    }
    Ok(total)
}

/// Variational upper bound on log-sum-exp; valid for every finite alpha.
pub fn bouchard_lse_upper<T: Scalar>(f: &ScoreVector<T>, alpha: T) -> Result<T, BoundsError> {
    if !alpha.is_finite() {
        return Err(BoundsError::NonFiniteAlpha);
    }
    Ok(lse_upper_slice(&f.0, alpha))
}

/// Minimizer of [`bouchard_lse_upper`] over alpha, with default solver settings.
pub fn optimize_alpha<T: Scalar>(f: &ScoreVector<T>) -> Result<T, BoundsError> {
    AlphaSolver::default().solve(&f.0)
}

/// Softmax lower bound induced by the variational log-sum-exp bound.
pub fn bouchard_log_bound<T: Scalar>(f: &ScoreVector<T>, k: usize, alpha: T) -> Result<T, BoundsError> {
    f.check_class(k)?;
    if !alpha.is_finite() {
        return Err(BoundsError::NonFiniteAlpha);
    }
    Ok(f.0[k] - lse_upper_slice(&f.0, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    // extended-precision (mpmath, 40 digits) reference values
    const LSE_012: f64 = 2.407_605_964_444_380_3;
    const P_310: f64 = 0.843_794_734_481_339_5;
    const LOGP_310: f64 = -0.169_846_019_556_285_65;
    const LSE_310: f64 = 3.169_846_019_556_285_6;
    const OVE_310: f64 = -0.175_515_362_616_714_56;
    const ALPHA_310: f64 = 2.244_195_546_469_533_2;
    const UPPER_310: f64 = 3.738_998_600_855_333_9;

    fn sv(v: &[f64]) -> ScoreVector<f64> {
        ScoreVector::from_f64(v).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn score_vector_validation() {
        assert_eq!(ScoreVector::<f64>::new(vec![1.0]), Err(BoundsError::TooFewClasses(1)));
        assert_eq!(ScoreVector::new(vec![0.0, f64::NAN]), Err(BoundsError::NonFinite { index: 1 }));
        assert!(ScoreVector::new(vec![0.0, f64::INFINITY]).is_err());
        let json = serde_json::to_string(&sv(&[1.0, 2.0])).unwrap();
        assert_eq!(json, "[1.0,2.0]");
        assert!(serde_json::from_str::<ScoreVector<f64>>("[1.0]").is_err());
    }

    #[test]
    fn log_sum_exp_examples() {
        close(log_sum_exp(&sv(&[0.0, 0.0])), 2f64.ln(), 1e-15);
        close(log_sum_exp(&sv(&[1000.0, 1000.0])), 1000.0 + 2f64.ln(), 1e-12);
        close(log_sum_exp(&sv(&[0.0, 1.0, 2.0])), LSE_012, 1e-14);
        close(log_sum_exp(&sv(&[3.0, 1.0, 0.0])), LSE_310, 1e-14);
        close(log_sum_exp(&sv(&[-1000.0, -1000.0])), -1000.0 + 2f64.ln(), 1e-12);
    }

    #[test]
    fn softmax_examples() {
        close(softmax_prob(&sv(&[0.0, 0.0]), 0).unwrap(), 0.5, 1e-15);
        let f = sv(&[2f64.ln(), 0.0, 0.0]);
        close(softmax_prob(&f, 0).unwrap(), 0.5, 1e-15);
        close(softmax_prob(&sv(&[3.0, 1.0, 0.0]), 0).unwrap(), P_310, 1e-14);
        close(log_softmax_prob(&sv(&[3.0, 1.0, 0.0]), 0).unwrap(), LOGP_310, 1e-14);
        let total: f64 = softmax(&sv(&[3.0, -700.0, 800.0, 0.1])).iter().sum();
        close(total, 1.0, 1e-12);
        assert_eq!(softmax_prob(&sv(&[0.0, 0.0]), 2), Err(BoundsError::ClassOutOfRange { index: 2, classes: 2 }));
    }

    #[test]
    fn stable_sigmoid_forms() {
        for z in [-800.0, -30.0, -1.0, 0.0, 1.0, 30.0, 800.0] {
            let ls: f64 = log_sigmoid(z);
            assert!(ls.is_finite() && ls <= 0.0);
            close(sigmoid(z) + sigmoid(-z), 1.0, 1e-15);
            close(softplus(z) - softplus(-z), z, 1e-12);
        }
        close(log_sigmoid(800.0f64), 0.0, 1e-300);
        close(log_sigmoid(-800.0f64), -800.0, 1e-12);
        assert!(log_sigmoid(-800.0f32).is_finite());
    }

    #[test]
    fn ove_examples() {
        let (a, b) = (0.7, -1.3);
        let two = sv(&[a, b]);
        close(ove_log_bound(&two, 0).unwrap(), log_softmax_prob(&two, 0).unwrap(), 1e-15);

        let sym = sv(&[0.0, 0.0, 0.0]);
        close(ove_log_bound(&sym, 0).unwrap(), 2.0 * 0.5f64.ln(), 1e-15);
        assert!(ove_log_bound(&sym, 0).unwrap() < (1.0f64 / 3.0).ln());

        let f = sv(&[3.0, 1.0, 0.0]);
        close(ove_log_bound(&f, 0).unwrap(), OVE_310, 1e-14);
        assert!(OVE_310 <= LOGP_310);
    }

    #[test]
    fn hierarchical_examples() {
        let f = sv(&[0.0, 0.0, 0.0, 0.0]);
        let exact = LabelPartition::single_block(4, 0).unwrap();
        close(hierarchical_log_bound(&f, &exact).unwrap(), 0.25f64.ln(), 1e-15);
        let ove = LabelPartition::singletons(4, 0).unwrap();
        close(hierarchical_log_bound(&f, &ove).unwrap(), ove_log_bound(&f, 0).unwrap(), 1e-15);

        let mid = LabelPartition::new(4, 0, vec![vec![1, 2], vec![3]]).unwrap();
        let v = hierarchical_log_bound(&f, &mid).unwrap();
        close(v, (1.0f64 / 3.0).ln() + 0.5f64.ln(), 1e-15);
        assert!(3.0 * 0.5f64.ln() < v && v < 0.25f64.ln());

        let g = sv(&[0.3, -2.0, 4.0, 1.5, 0.0]);
        for target in 0..5 {
            let exact = LabelPartition::single_block(5, target).unwrap();
            close(hierarchical_log_bound(&g, &exact).unwrap(), log_softmax_prob(&g, target).unwrap(), 1e-13);
        }
    }

    #[test]
    fn partition_validation() {
        assert!(LabelPartition::new(4, 0, vec![vec![1, 2]]).is_err());
        assert!(LabelPartition::new(4, 0, vec![vec![0, 1], vec![2, 3]]).is_err());
        assert!(LabelPartition::new(4, 0, vec![vec![1, 2], vec![2, 3]]).is_err());
        assert!(LabelPartition::new(4, 0, vec![vec![1, 2, 3], vec![]]).is_err());
        assert!(LabelPartition::new(4, 4, vec![]).is_err());
        let p = LabelPartition::singletons(4, 2).unwrap();
        assert!(p.merge(0, 0).is_err());
        let merged = p.merge(2, 0).unwrap();
        assert_eq!(merged.blocks(), &[vec![0, 3], vec![1]]);
        let f = sv(&[0.0, 1.0, 2.0]);
        assert!(hierarchical_log_bound(&f, &p).is_err());
    }

    #[test]
    fn bouchard_examples() {
        let a = 1.7;
        let f = sv(&[a, a]);
        close(bouchard_lse_upper(&f, a).unwrap(), a + 2.0 * 2f64.ln(), 1e-14);
        close(log_sum_exp(&f), a + 2f64.ln(), 1e-14);
        close(optimize_alpha(&sv(&[0.0, 0.0])).unwrap(), 0.0, 1e-12);

        let f = sv(&[3.0, 1.0, 0.0]);
        let alpha = optimize_alpha(&f).unwrap();
        close(alpha, ALPHA_310, 1e-9);
        let upper = bouchard_lse_upper(&f, alpha).unwrap();
        close(upper, UPPER_310, 1e-12);
        assert!(upper >= LSE_310);
        let bound = bouchard_log_bound(&f, 0, alpha).unwrap();
        assert!(bound <= LOGP_310);
        assert!(bouchard_lse_upper(&f, f64::NAN).is_err());
    }

    #[test]
    fn alpha_matches_grid_bisection_oracle() {
        // independent oracle: bisection on the residual over a dense grid bracket
        let f = [3.0f64, 1.0, 0.0];
        let residual = |a: f64| f.iter().map(|&v| 1.0 / (1.0 + (a - v).exp())).sum::<f64>() - 1.0;
        let grid: Vec<f64> = (0..=20_000).map(|i| -10.0 + i as f64 * 1e-3).collect();
        let cross = grid.windows(2).find(|w| residual(w[0]) > 0.0 && residual(w[1]) <= 0.0).unwrap();
        let (mut lo, mut hi) = (cross[0], cross[1]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let alpha = optimize_alpha(&sv(&f)).unwrap();
        close(alpha, 0.5 * (lo + hi), 1e-9);
    }

    #[test]
    fn alpha_two_class_and_symmetric() {
        for (a, b) in [(0.0, 0.0), (5.0, -3.0), (-700.0, 650.0), (1e-3, 2e-3)] {
            let alpha = optimize_alpha(&sv(&[a, b])).unwrap();
            close(alpha, 0.5 * (a + b), 1e-8);
        }
        for k in [3usize, 10, 1000] {
            let c = -2.5;
            let alpha = optimize_alpha(&ScoreVector::new(vec![c; k]).unwrap()).unwrap();
            close(alpha, c + ((k - 1) as f64).ln(), 1e-9);
        }
    }

    #[test]
    fn alpha_converges_on_spread_scores() {
        // plain bracketed Newton bounces between the bracket ends here
        let f = [6.7079, -14.8279, 3.054, 0.0413, 3.982, 12.359, 14.9117, -31.48, 10.8284, -5.5763];
        let alpha = AlphaSolver::default().solve(&f).unwrap();
        let sum: f64 = f.iter().map(|&v| sigmoid(v - alpha)).sum();
        close(sum, 1.0, 1e-10);

        use rand::Rng as _;
        let mut r = crate::rng::substream(3, "alpha-spread");
        for _ in 0..2000 {
            let k = r.random_range(2..40);
            let scale = [1.0, 30.0, 300.0][r.random_range(0..3)];
            let f: Vec<f64> = (0..k).map(|_| r.random_range(-scale..scale)).collect();
            let solver = AlphaSolver { max_iter: 120, tol: 1e-10 };
            assert!(solver.solve(&f).is_ok(), "{f:?}");
        }
    }

    #[test]
    fn alpha_iteration_cap() {
        let solver = AlphaSolver { max_iter: 1, tol: 1e-10 };
        let err = solver.solve(&[3.0f64, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, BoundsError::AlphaNotConverged { iterations: 1, .. }));
    }

    #[test]
    fn bouchard_at_target_alpha_is_ove_minus_log2() {
        let f = sv(&[0.4, -1.1, 2.0, 0.0]);
        for k in 0..4 {
            let b = bouchard_log_bound(&f, k, f.as_slice()[k]).unwrap();
            close(b, ove_log_bound(&f, k).unwrap() - 2f64.ln(), 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let f = ScoreVector::<f32>::from_f64(&[3.0, 1.0, 0.0]).unwrap();
        assert!((softmax_prob(&f, 0).unwrap() - P_310 as f32).abs() < 1e-6);
        assert!((ove_log_bound(&f, 0).unwrap() - OVE_310 as f32).abs() < 1e-6);
        let alpha = optimize_alpha(&f).unwrap();
        assert!((alpha - ALPHA_310 as f32).abs() < 1e-5);
    }
}
