//! Stochastic training against full-batch fits.

use std::path::PathBuf;

use ove::bounds::AlphaSolver;
use ove::data::{gen_toy_5class, load_idx};
use ove::eval::evaluate_model;
use ove::model::{fit_full_batch, ove_loglik, LinearModel, ObjectiveKind, SparseVector};
use ove::optim::AscentOptions;
use ove::sgd::{train, TrainConfig};

#[test]
fn toy_decision_regions_match_full_batch() {
    let data = gen_toy_5class::<f64>(200, 1).unwrap();
    let full = fit_full_batch(
        LinearModel::zeros(5, 2),
        &data,
        ObjectiveKind::Ove,
        1.0,
        &AscentOptions::lbfgs(),
        &AlphaSolver::default(),
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 10,
        remaining: 1,
        epochs: 2000,
        lr0: 0.05,
        lr_decay: 0.995,
        lambda: 1.0,
        seed: 1,
        objective: ObjectiveKind::Ove,
        log_every: 100,
    };
    let sgd = train(LinearModel::zeros(5, 2), &data, &cfg).unwrap().model;

    let final_bound = ove_loglik(&sgd, &data, 1.0).unwrap();
    assert!((final_bound - full.value).abs() <= 0.02 * full.value.abs(), "{final_bound} vs {}", full.value);

    let (mut agree, mut total) = (0, 0);
    for i in 0..=120 {
        for j in 0..=120 {
            let x = SparseVector::from_dense(&[-6.0 + 0.1 * i as f64, -6.0 + 0.1 * j as f64]).unwrap();
            agree += (sgd.predict(&x).unwrap() == full.model.predict(&x).unwrap()) as usize;
            total += 1;
        }
    }
    let frac = agree as f64 / total as f64;
    assert!(frac >= 0.98, "grid agreement {frac}");
}

#[test]
fn mnist_stochastic_one_vs_each_error() {
    let dir = std::env::var_os("OVE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let load = |img: &str, lab: &str| {
        load_idx::<f64>(&dir.join(img), &dir.join(lab), "mnist")
            .unwrap_or_else(|e| panic!("MNIST not readable in {} ({e}); run scripts/fetch_mnist.sh", dir.display()))
    };
    let train_d = load("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
    let test_d = load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
    let cfg = TrainConfig {
        batch_size: 200,
        remaining: 1,
        epochs: 30,
        lr0: 0.0025,
        lr_decay: 0.9,
        lambda: 1.0,
        seed: 1,
        objective: ObjectiveKind::Ove,
        log_every: 300,
    };
    let out = train(LinearModel::zeros(10, 784), &train_d, &cfg).unwrap();
    let (err, nlpd) = evaluate_model(&out.model, &test_d).unwrap();
    assert!((err - 0.080).abs() <= 0.01, "error {err}");
    assert!((nlpd - 0.278).abs() <= 0.05, "nlpd {nlpd}");
}
