mod common;

use evotopo::data::{desk_subset, load_cifar10, synthetic_dataset, Dataset, SyntheticSpec};
use evotopo::genome::parse_key;
use evotopo::nn::{test_accuracy, train, TrainConfig};
use nalgebra::{DMatrix, DVector};

fn spec(classes: usize, per_class: usize, side: usize, noise: f64) -> SyntheticSpec {
    SyntheticSpec {
        classes,
        per_class,
        height: side,
        width: side,
        channels: 1,
        noise,
    }
}

/// Rows of pixels with a trailing bias column, and +-1 targets.
fn design(d: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    let n = d.len();
    let f = d.images.sample_len();
    let x = DMatrix::from_fn(n, f + 1, |i, j| if j < f { d.images.sample(i)[j] } else { 1.0 });
    let y = DVector::from_fn(n, |i, _| if d.labels[i] == 0 { 1.0 } else { -1.0 });
    (x, y)
}

#[test]
fn noise_free_two_class_data_is_linearly_separable() {
    let train_set = synthetic_dataset(&spec(2, 100, 4, 0.0), 1).unwrap();
    let held_out = synthetic_dataset(&spec(2, 100, 4, 0.0), 2).unwrap();
    let (x, y) = design(&train_set);
    let w = x.clone().svd(true, true).solve(&y, 1e-12).unwrap();
    let (xh, yh) = design(&held_out);
    let correct = (&xh * &w).iter().zip(yh.iter()).filter(|(p, t)| p.signum() == t.signum()).count();
    assert_eq!(correct, held_out.len());
}

#[test]
fn small_cnn_beats_chance_on_synthetic_data() {
    let data = synthetic_dataset(&spec(3, 30, 8, 0.3), 4).unwrap();
    let held_out = synthetic_dataset(&spec(3, 20, 8, 0.3), 5).unwrap();
    let mut cfg = TrainConfig {
        batch_size: 10,
        seed: 2,
        ..TrainConfig::default()
    };
    cfg.lr.initial = 0.01;
    let out = train(&parse_key("S4.4|PM").unwrap(), &data, 5, None, &cfg).unwrap();
    assert_eq!(out.loss_curve.len(), 5);
    assert!(out.loss_curve[4] < out.loss_curve[0]);
    assert!(test_accuracy(&out.state, &held_out).unwrap() > 0.5);
}

#[test]
fn stand_in_batches_load_as_balanced_subsets() {
    let dir = tempfile::tempdir().unwrap();
    common::write_stand_in_cifar(dir.path(), 200, 3);
    let cifar = load_cifar10(dir.path()).unwrap();
    assert_eq!(cifar.train.len(), 1000);
    assert_eq!(cifar.test.len(), 200);
    let sub = desk_subset(&cifar.train, 7, Some(8), 0).unwrap();
    assert_eq!(sub.class_counts(), vec![7; 10]);
    assert_eq!((sub.shape().height, sub.shape().width, sub.shape().channels), (8, 8, 3));
}
