#![allow(dead_code)]

use ove::data::{Example, SparseDataset};
use ove::model::{LinearModel, SparseVector};
use ove::rng;
use rand::Rng as _;

/// Small random problem: `n` rows with about 60% of features active.
pub fn random_dataset(n: usize, classes: usize, features: usize, seed: u64) -> SparseDataset<f64> {
    let mut r = rng::substream(seed, "fixture-data");
    let rows = (0..n)
        .map(|_| {
            let dense: Vec<f64> =
                (0..features).map(|_| if r.random::<f64>() < 0.6 { r.random_range(-2.0..2.0) } else { 0.0 }).collect();
            Example { x: SparseVector::from_dense(&dense).unwrap(), label: r.random_range(0..classes) }
        })
        .collect();
    SparseDataset::new(rows, classes, features, "random").unwrap()
}

pub fn random_model(classes: usize, features: usize, scale: f64, seed: u64) -> LinearModel<f64> {
    let mut r = rng::substream(seed, "fixture-model");
    let w = (0..classes * features).map(|_| r.random_range(-scale..scale)).collect();
    let b = (0..classes).map(|_| r.random_range(-scale..scale)).collect();
    LinearModel::from_parts(classes, features, w, b).unwrap()
}

/// Norm-wise relative error `||a - b|| / max(||b||, 1e-8)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-8)
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
