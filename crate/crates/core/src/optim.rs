//! Deterministic full-batch maximizers for smooth concave objectives.
//!
//! Both methods use an Armijo backtracking line search. Near the optimum the
//! true increase of a step drops below the precision of the objective value,
//! so a step whose value is equal up to round-off is also accepted when the
//! directional derivative at the trial point is still non-negative.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentMethod {
    /// Steepest ascent with backtracking.
    GradientAscent,
    /// Limited-memory BFGS with the given history length.
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub method: AscentMethod,
    pub max_iter: usize,
    /// Stop once the infinity norm of the gradient is at or below this.
    pub grad_tol: f64,
    /// First trial step of steepest ascent.
    pub initial_step: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { method: AscentMethod::GradientAscent, max_iter: 100_000, grad_tol: 1e-8, initial_step: 1.0 }
    }
}

impl AscentOptions {
    pub fn lbfgs() -> Self {
        AscentOptions { method: AscentMethod::Lbfgs { memory: 10 }, max_iter: 5_000, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct AscentOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, objective)` after every accepted step, starting at iteration 0.
    pub trace: Vec<(usize, f64)>,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Maximizes `eval`, which returns the objective and writes its gradient.
///
/// Errors from `eval` abort the run. Hitting `max_iter` or a line-search
/// failure is reported through `converged = false`, not as an error.
pub fn maximize<T, E, F>(x0: Vec<T>, opts: &AscentOptions, mut eval: F) -> Result<AscentOutcome<T>, E>
where
    T: Scalar,
    F: FnMut(&[T], &mut [T]) -> Result<T, E>,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![T::zero(); n];
    let mut value = eval(&x, &mut grad)?;
    let mut trace = vec![(0, value.as_f64())];
    let grad_tol = T::of(opts.grad_tol);

    let mut x_new = vec![T::zero(); n];
    let mut grad_new = vec![T::zero(); n];
    let mut dir = vec![T::zero(); n];
    let mut history = LbfgsHistory::new(match opts.method {
        AscentMethod::Lbfgs { memory } => memory,
        AscentMethod::GradientAscent => 0,
    });
    let mut step = T::of(opts.initial_step);

    for iter in 0..opts.max_iter {
        let grad_norm = inf_norm(&grad);
        if grad_norm <= grad_tol {
            return Ok(AscentOutcome { x, value, grad_norm, iterations: iter, converged: true, trace });
        }

        let lbfgs = history.memory > 0;
        if lbfgs {
            history.direction(&grad, &mut dir);
            if dot(&dir, &grad) <= T::zero() {
                history.clear();
                dir.copy_from_slice(&grad);
            }
        } else {
            dir.copy_from_slice(&grad);
        }
        let slope = dot(&dir, &grad);

        let mut t = if lbfgs {
            if history.is_empty() {
                T::one() / inf_norm(&dir).max(T::one())
            } else {
                T::one()
            }
        } else {
            step
        };
        let slack = T::epsilon() * T::of(16.0) * (value.abs() + T::one());
        let mut accepted = None;
        while t.as_f64() > MIN_STEP {
            for ((xn, &xi), &di) in x_new.iter_mut().zip(&x).zip(&dir) {
                *xn = xi + t * di;
            }
            let v = eval(&x_new, &mut grad_new)?;
            let sufficient = v >= value + T::of(ARMIJO) * t * slope;
            // inside the round-off band only a step that stops short of the
            // line maximum is known to make progress
            let flat = v >= value - slack && dot(&dir, &grad_new) >= T::zero();
            if v.is_finite() && (sufficient || flat) {
                accepted = Some(v);
                break;
            }
            t *= T::half();
        }
        let Some(v) = accepted else {
            let grad_norm = inf_norm(&grad);
            return Ok(AscentOutcome { x, value, grad_norm, iterations: iter, converged: false, trace });
        };

        if lbfgs {
            // curvature pair of the minimization of -f
            let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let y: Vec<T> = grad.iter().zip(&grad_new).map(|(&a, &b)| a - b).collect();
            history.push(s, y);
        } else {
            step = t * T::of(2.0);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut grad, &mut grad_new);
        value = v;
        trace.push((iter + 1, value.as_f64()));
    }
    let grad_norm = inf_norm(&grad);
    Ok(AscentOutcome { x, value, grad_norm, iterations: opts.max_iter, converged: grad_norm <= grad_tol, trace })
}

struct LbfgsHistory<T> {
    memory: usize,
    s: Vec<Vec<T>>,
    y: Vec<Vec<T>>,
    rho: Vec<T>,
}

impl<T: Scalar> LbfgsHistory<T> {
    fn new(memory: usize) -> Self {
        LbfgsHistory { memory, s: Vec::new(), y: Vec::new(), rho: Vec::new() }
    }

    fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<T>, y: Vec<T>) {
        let sy = dot(&s, &y);
        if !(sy > T::zero()) {
            return;
        }
        if self.s.len() == self.memory {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        self.rho.push(T::one() / sy);
    }

    /// Two-loop recursion; `grad` is the ascent gradient, so the result is an ascent direction.
    fn direction(&self, grad: &[T], out: &mut [T]) {
        out.copy_from_slice(grad);
        let m = self.s.len();
        let mut alpha = vec![T::zero(); m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], out);
            for (o, &yi) in out.iter_mut().zip(&self.y[i]) {
                *o -= alpha[i] * yi;
            }
        }
        if m > 0 {
            let gamma = dot(&self.s[m - 1], &self.y[m - 1]) / dot(&self.y[m - 1], &self.y[m - 1]);
            for o in out.iter_mut() {
                *o *= gamma;
            }
        }
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], out);
            for (o, &si) in out.iter_mut().zip(&self.s[i]) {
                *o += (alpha[i] - beta) * si;
            }
        }
    }
}
