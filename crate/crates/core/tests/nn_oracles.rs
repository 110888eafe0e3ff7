mod common;

use common::*;
use entail::nn::{
    self, accuracy, fit, Activation, Dataset, LayerSpec, MlpModel, Mode, Preset, TrainConfig,
};
use rand::Rng;

fn small_text_like(reg: f64, dropout: f64) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(7, 6, Activation::Relu)
            .with_activity_reg(reg)
            .with_dropout(dropout),
        LayerSpec::new(6, 6, Activation::Relu)
            .with_activity_reg(reg)
            .with_dropout(dropout),
        LayerSpec::new(6, 3, Activation::Sigmoid),
    ]
}

#[test]
fn forward_matches_oracle() {
    let mut r = rng(1);
    let model = MlpModel::init(&small_text_like(1e-4, 0.3), 4).unwrap();
    let x = random_matrix(20, 7, &mut r);
    let probs = model.forward_batch(x.view(), Mode::Infer).unwrap();
    for i in 0..20 {
        let (oracle, _) = oracle_forward(&model, &x.row(i).to_vec());
        for c in 0..3 {
            assert!((probs[[i, c]] - oracle[c]).abs() < 1e-12);
        }
        let single = model
            .forward_slice(&x.row(i).to_vec(), Mode::Infer)
            .unwrap();
        assert_eq!(single.to_vec(), probs.row(i).to_vec());
    }
}

#[test]
fn loss_matches_oracle_and_respects_floor() {
    let mut r = rng(2);
    for reg in [0.0, 1e-4, 1e-2] {
        let model = MlpModel::init(&small_text_like(reg, 0.0), 5).unwrap();
        let x = random_matrix(9, 7, &mut r);
        let y: Vec<usize> = (0..9).map(|_| r.gen_range(0..3)).collect();
        let loss = model.loss(x.view(), &y, Mode::Infer).unwrap();
        assert!((loss - oracle_loss(&model, &x, &y)).abs() < 1e-10);
        assert!(loss >= (1.0 + 2.0 / std::f64::consts::E).ln() - 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences_under_fixed_dropout_mask() {
    let mut r = rng(3);
    let model = MlpModel::init(&small_text_like(1e-3, 0.4), 6).unwrap();
    let x = random_matrix(6, 7, &mut r);
    let y = vec![0, 1, 2, 2, 1, 0];
    let mode = Mode::Train { seed: 99 };
    let (loss, grads) = model.gradients(x.view(), &y, mode).unwrap();
    assert_eq!(loss, model.loss(x.view(), &y, mode).unwrap());
    let numeric = finite_difference_gradient(&model, &x, &y, mode, 1e-5);
    let err = max_relative_error(&grads.flatten(), &numeric);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn dropout_only_acts_in_training() {
    let mut r = rng(4);
    let model = MlpModel::init(&small_text_like(0.0, 0.5), 7).unwrap();
    let x = random_matrix(4, 7, &mut r);
    let a = model.forward_batch(x.view(), Mode::Infer).unwrap();
    let b = model.forward_batch(x.view(), Mode::Infer).unwrap();
    assert_eq!(a, b);
    let t1 = model
        .forward_batch(x.view(), Mode::Train { seed: 1 })
        .unwrap();
    let t1_again = model
        .forward_batch(x.view(), Mode::Train { seed: 1 })
        .unwrap();
    let t2 = model
        .forward_batch(x.view(), Mode::Train { seed: 2 })
        .unwrap();
    assert_eq!(t1, t1_again);
    assert_ne!(t1, a);
    assert_ne!(t1, t2);
}

#[test]
fn training_is_deterministic_in_seed() {
    let (x, y) = gaussian_blobs(20, 5, 4.0, 8);
    let data = Dataset::new(x, y).unwrap();
    let specs = [
        LayerSpec::new(5, 8, Activation::Relu).with_dropout(0.2),
        LayerSpec::new(8, 3, Activation::Sigmoid),
    ];
    let config = TrainConfig {
        epochs: 5,
        batch_size: 16,
        seed: 3,
        ..Default::default()
    };
    let run = || fit(MlpModel::init(&specs, 1).unwrap(), &data, &config).unwrap();
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(nn::to_bytes(&m1), nn::to_bytes(&m2));
    let other = TrainConfig { seed: 4, ..config };
    let (m3, _) = fit(MlpModel::init(&specs, 1).unwrap(), &data, &other).unwrap();
    assert_ne!(nn::to_bytes(&m1), nn::to_bytes(&m3));
}

#[test]
fn sgd_learns_blobs() {
    let (x, y) = gaussian_blobs(40, 6, 6.0, 9);
    let data = Dataset::new(x, y).unwrap();
    let model = MlpModel::init(
        &[
            LayerSpec::new(6, 16, Activation::Relu),
            LayerSpec::new(16, 3, Activation::Sigmoid),
        ],
        2,
    )
    .unwrap();
    let config = TrainConfig {
        optimizer: "sgd".into(),
        learning_rate: 0.5,
        batch_size: 16,
        epochs: 60,
        ..Default::default()
    };
    let (model, history) = fit(model, &data, &config).unwrap();
    assert!(history.last().unwrap() < &history[0]);
    assert!(accuracy(&model, &data).unwrap() >= 0.9);
}

#[test]
fn presets_have_expected_shapes() {
    let text = MlpModel::init_preset(Preset::TextEntail, 0);
    let dims: Vec<(usize, usize)> = text
        .layers()
        .iter()
        .map(|l| (l.spec().in_dim, l.spec().out_dim))
        .collect();
    assert_eq!(dims, [(769, 450), (450, 450), (450, 3)]);
    let image = MlpModel::init_preset(Preset::ImageEntail, 0);
    let dims: Vec<(usize, usize)> = image
        .layers()
        .iter()
        .map(|l| (l.spec().in_dim, l.spec().out_dim))
        .collect();
    assert_eq!(dims, [(4097, 5000), (5000, 3)]);
    assert_eq!(image.num_parameters(), 4097 * 5000 + 5000 + 5000 * 3 + 3);
}

#[test]
fn saved_model_predicts_like_original_at_f32() {
    let mut r = rng(10);
    let model = MlpModel::init(&small_text_like(1e-4, 0.2), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nnwt");
    nn::save_model(&model, &path).unwrap();
    let loaded = nn::load_model(&path).unwrap();
    let x = random_matrix(10, 7, &mut r);
    let a = model.forward_batch(x.view(), Mode::Infer).unwrap();
    let b = loaded.forward_batch(x.view(), Mode::Infer).unwrap();
    for (p, q) in a.iter().zip(b.iter()) {
        assert!((p - q).abs() < 1e-5);
    }
    assert_eq!(loaded.layers()[0].spec().dropout_rate as f32, 0.2f32);
}
