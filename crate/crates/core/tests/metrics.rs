mod common;

use beamcausal::eval::top_k_accuracy;
use beamcausal::mlp::MlpModel;
use beamcausal::scene::Split;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single affine layer `logits = x . w`.
fn linear_model(w: Array2<f64>) -> MlpModel {
    let (inputs, classes) = w.dim();
    let mut m = MlpModel::new(inputs, &[], classes, 0).unwrap();
    m.layers[0].w = w;
    m.layers[0].b = Array1::zeros(classes);
    m
}

fn one_hot_dataset(n: usize, classes: usize, seed: u64) -> beamcausal::scene::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let x = y
        .iter()
        .map(|&label| (0..classes).map(|c| if c == label { 1.0 } else { 0.0 }).collect())
        .collect();
    common::dataset(x, y, classes)
}

#[test]
fn memorizing_model_is_perfect() {
    let d = one_hot_dataset(300, 16, 1);
    let model = linear_model(Array2::eye(16) * 10.0);
    let all: Vec<usize> = (0..16).collect();
    for split in [Split::Train, Split::Val, Split::Test] {
        assert_eq!(top_k_accuracy(&model, &d, split, &all, 1).unwrap(), 1.0);
    }
}

#[test]
fn top_y_is_always_a_hit() {
    let d = one_hot_dataset(200, 16, 2);
    let model = linear_model(Array2::from_shape_fn((16, 16), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0));
    let all: Vec<usize> = (0..16).collect();
    assert_eq!(top_k_accuracy(&model, &d, Split::Test, &all, 16).unwrap(), 1.0);
    assert!(top_k_accuracy(&model, &d, Split::Test, &all, 17).is_err());
    assert!(top_k_accuracy(&model, &d, Split::Test, &all, 0).is_err());
}

#[test]
fn uninformative_model_scores_chance() {
    let classes = 128;
    let d = one_hot_dataset(20_000, classes, 3);
    let model = linear_model(Array2::zeros((classes, classes)));
    let all: Vec<usize> = (0..classes).collect();
    let n = d.split(Split::Test).len() as f64;
    for k in [1usize, 2, 8, 32] {
        let p = k as f64 / classes as f64;
        let acc = top_k_accuracy(&model, &d, Split::Test, &all, k).unwrap();
        let sd = (p * (1.0 - p) / n).sqrt();
        assert!((acc - p).abs() < 4.0 * sd, "k={k}: {acc} vs {p}");
    }
}

#[test]
fn top_k_accuracy_grows_with_k() {
    let d = one_hot_dataset(400, 12, 4);
    let model = linear_model(Array2::from_shape_fn((12, 12), |(i, j)| ((i * 5 + j * 11) % 7) as f64));
    let all: Vec<usize> = (0..12).collect();
    let acc: Vec<f64> = (1..=12).map(|k| top_k_accuracy(&model, &d, Split::Test, &all, k).unwrap()).collect();
    assert!(acc.windows(2).all(|w| w[0] <= w[1]));
}
