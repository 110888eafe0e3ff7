use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{MlpModel, Mode, NUM_CLASSES};
use super::optim::OptimizerRegistry;
use super::NnError;

/// Feature rows with class indices in `0..3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>) -> Result<Self, NnError> {
        if x.nrows() != y.len() {
            return Err(NnError::BatchMismatch {
                rows: x.nrows(),
                labels: y.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= NUM_CLASSES) {
            return Err(NnError::BadLabel(bad));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Name looked up in an [`OptimizerRegistry`].
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: "adam".into(),
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        Ok(())
    }
}

/// Mean training loss of each epoch, measured on the mini-batches as they
/// were trained (dropout active).
pub type LossHistory = Vec<f64>;

/// Mini-batch training with the built-in optimizers.
pub fn fit(
    model: MlpModel,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(MlpModel, LossHistory), NnError> {
    fit_with(model, data, config, &OptimizerRegistry::with_builtins())
}

/// Deterministic in `config.seed`: the same seed drives shuffling and every
/// dropout mask.
pub fn fit_with(
    mut model: MlpModel,
    data: &Dataset,
    config: &TrainConfig,
    optimizers: &OptimizerRegistry,
) -> Result<(MlpModel, LossHistory), NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if data.x.ncols() != model.input_dim() {
        return Err(NnError::DimMismatch {
            expected: model.input_dim(),
            found: data.x.ncols(),
        });
    }
    let mut optimizer = optimizers.create(&config.optimizer, config.learning_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = data.x.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.y[i]).collect();
            let mode = Mode::Train { seed: rng.gen() };
            let (loss, grads) = model.gradients(x.view(), &y, mode)?;
            optimizer.step(&mut model, &grads);
            total += loss * chunk.len() as f64;
        }
        history.push(total / data.len() as f64);
    }
    Ok((model, history))
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &MlpModel, data: &Dataset) -> Result<f64, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let preds = model.predict_batch(data.x.view())?;
    let hits = preds
        .iter()
        .zip(&data.y)
        .filter(|((p, _), &y)| *p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};
    use ndarray::array;

    fn small() -> MlpModel {
        MlpModel::init(
            &[
                LayerSpec::new(2, 6, Activation::Relu).with_dropout(0.2),
                LayerSpec::new(6, 3, Activation::Sigmoid),
            ],
            11,
        )
        .unwrap()
    }

    fn data() -> Dataset {
        Dataset::new(
            array![[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [0.9, 0.1]],
            vec![0, 1, 2, 0],
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(NnError::InvalidConfig(_))));
        }
    }

    #[test]
    fn history_length_and_determinism() {
        let cfg = TrainConfig {
            epochs: 7,
            batch_size: 3,
            ..Default::default()
        };
        let (a, ha) = fit(small(), &data(), &cfg).unwrap();
        let (b, hb) = fit(small(), &data(), &cfg).unwrap();
        assert_eq!(ha.len(), 7);
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn fit_errors() {
        let cfg = TrainConfig::default();
        let empty = Dataset::new(Array2::zeros((0, 2)), vec![]).unwrap();
        assert!(matches!(
            fit(small(), &empty, &cfg),
            Err(NnError::EmptyBatch)
        ));
        let wide = Dataset::new(Array2::zeros((1, 5)), vec![0]).unwrap();
        assert!(matches!(
            fit(small(), &wide, &cfg),
            Err(NnError::DimMismatch { .. })
        ));
        let unknown = TrainConfig {
            optimizer: "lbfgs".into(),
            ..Default::default()
        };
        assert!(matches!(
            fit(small(), &data(), &unknown),
            Err(NnError::UnknownOptimizer(_))
        ));
        assert!(Dataset::new(Array2::zeros((1, 2)), vec![4]).is_err());
    }

    #[test]
    fn small_sgd_step_reduces_single_example_loss() {
        let model = MlpModel::init(
            &[
                LayerSpec::new(2, 5, Activation::Relu),
                LayerSpec::new(5, 3, Activation::Sigmoid),
            ],
            3,
        )
        .unwrap();
        let one = Dataset::new(array![[0.7, -0.3]], vec![2]).unwrap();
        let before = model.loss(one.x.view(), &one.y, Mode::Infer).unwrap();
        let cfg = TrainConfig {
            optimizer: "sgd".into(),
            learning_rate: 1e-4,
            epochs: 1,
            batch_size: 1,
            ..Default::default()
        };
        let (trained, _) = fit(model, &one, &cfg).unwrap();
        let after = trained.loss(one.x.view(), &one.y, Mode::Infer).unwrap();
        assert!(after < before, "{after} >= {before}");
    }
}
