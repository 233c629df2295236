//! Softmax lower bounds (one-vs-each, hierarchical, variational) and the
//! estimators and classifiers built on them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` case.

pub mod bounds;
pub mod data;
pub mod eval;
pub mod model;
pub mod nonparam;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod sgd;

pub use bounds::{AlphaSolver, BoundsError, LabelPartition};
pub use data::{DataError, Example};
pub use eval::{EvalError, MethodReport};
pub use model::{ModelError, Objective, ObjectiveKind};
pub use nonparam::{CountVector, Method, NonparamError};
pub use optim::{AscentMethod, AscentOptions};
pub use scalar::Scalar;
pub use sgd::{TrainConfig, TrainError, TrainTrace};

pub type Scores = bounds::ScoreVector<f64>;
pub type Model = model::LinearModel<f64>;
pub type ModelF32 = model::LinearModel<f32>;
pub type Sparse = model::SparseVector<f64>;
pub type Dataset = data::SparseDataset<f64>;
pub type DatasetF32 = data::SparseDataset<f32>;
pub type Estimate = nonparam::EstimationResult<f64>;
