use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::features::PairFeatures;

/// Floor applied to the gold-class probability before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Number of entailment classes every model predicts.
pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    /// Weight of the L2 penalty on this layer's post-activation outputs.
    pub activity_reg: f64,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            dropout_rate: 0.0,
            activity_reg: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_activity_reg(mut self, coeff: f64) -> Self {
        self.activity_reg = coeff;
        self
    }

    fn validate(&self, index: usize) -> Result<(), NnError> {
        let bad = |reason: String| NnError::InvalidLayer { index, reason };
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(bad(format!(
                "zero dimension {}x{}",
                self.in_dim, self.out_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(bad(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !self.activity_reg.is_finite() || self.activity_reg < 0.0 {
            return Err(bad(format!(
                "activity regularization {}",
                self.activity_reg
            )));
        }
        Ok(())
    }
}

/// The two classifier shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// 4097 -> 5000 ReLU (dropout 0.5) -> 3 sigmoid.
    ImageEntail,
    /// 769 -> 450 ReLU (dropout 0.55) -> 450 ReLU (dropout 0.4) -> 3 sigmoid,
    /// both hidden layers activity-regularized.
    TextEntail,
}

pub const DEFAULT_ACTIVITY_REG: f64 = 1e-4;

impl Preset {
    pub fn input_dim(self) -> usize {
        match self {
            Preset::ImageEntail => 4097,
            Preset::TextEntail => 769,
        }
    }

    pub fn hidden_dropout(self) -> Vec<f64> {
        match self {
            Preset::ImageEntail => vec![0.5],
            Preset::TextEntail => vec![0.55, 0.4],
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        match self {
            Preset::ImageEntail => self.layers_with(&self.hidden_dropout(), 0.0),
            Preset::TextEntail => self.layers_with(&self.hidden_dropout(), DEFAULT_ACTIVITY_REG),
        }
    }

    /// Layer stack with overridden hidden dropout rates. `activity_reg` is only
    /// used by the text shape; the image shape has no activity regularizer.
    pub fn layers_with(self, hidden_dropout: &[f64], activity_reg: f64) -> Vec<LayerSpec> {
        let relu = |i, o, k: usize| {
            LayerSpec::new(i, o, Activation::Relu)
                .with_dropout(hidden_dropout.get(k).copied().unwrap_or(0.0))
        };
        match self {
            Preset::ImageEntail => vec![
                relu(4097, 5000, 0),
                LayerSpec::new(5000, NUM_CLASSES, Activation::Sigmoid),
            ],
            Preset::TextEntail => vec![
                relu(769, 450, 0).with_activity_reg(activity_reg),
                relu(450, 450, 1).with_activity_reg(activity_reg),
                LayerSpec::new(450, NUM_CLASSES, Activation::Sigmoid),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    /// `in_dim x out_dim`, row = input index.
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl Layer {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }
}

/// Inference runs without dropout; training draws dropout masks from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Infer,
}

/// Per-layer parameter gradients, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    /// Weights then bias for each layer, matching [`MlpModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

struct Trace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    probs: Array2<f64>,
}

/// A dense feed-forward classifier ending in 3 sigmoid units whose outputs
/// are passed through softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    seed: Option<u64>,
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        validate_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|spec| {
                let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((spec.in_dim, spec.out_dim), || {
                    rng.gen_range(-limit..=limit)
                });
                Layer {
                    spec: *spec,
                    weights,
                    bias: Array1::zeros(spec.out_dim),
                }
            })
            .collect();
        Ok(Self {
            layers,
            seed: Some(seed),
        })
    }

    pub fn init_preset(preset: Preset, seed: u64) -> Self {
        Self::init(&preset.layers(), seed).expect("preset layers are valid")
    }

    /// Builds a model from explicit parameters.
    pub fn from_parts(parts: Vec<(LayerSpec, Array2<f64>, Array1<f64>)>) -> Result<Self, NnError> {
        let specs: Vec<_> = parts.iter().map(|(s, _, _)| *s).collect();
        validate_specs(&specs)?;
        let mut layers = Vec::with_capacity(parts.len());
        for (index, (spec, weights, bias)) in parts.into_iter().enumerate() {
            if weights.dim() != (spec.in_dim, spec.out_dim) || bias.len() != spec.out_dim {
                return Err(NnError::InvalidLayer {
                    index,
                    reason: format!(
                        "parameter shapes {:?}/{} do not match {}x{}",
                        weights.dim(),
                        bias.len(),
                        spec.in_dim,
                        spec.out_dim
                    ),
                });
            }
            if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
                return Err(NnError::InvalidLayer {
                    index,
                    reason: "non-finite parameter".into(),
                });
            }
            layers.push(Layer {
                spec,
                weights,
                bias,
            });
        }
        Ok(Self { layers, seed: None })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable (weights, bias) per layer, for optimizers.
    pub(crate) fn params_mut(
        &mut self,
    ) -> impl Iterator<Item = (&mut Array2<f64>, &mut Array1<f64>)> {
        self.layers
            .iter_mut()
            .map(|l| (&mut l.weights, &mut l.bias))
    }

    /// Overrides dropout rates in layer order; extra layers keep their rate.
    pub fn set_dropout(&mut self, rates: &[f64]) -> Result<(), NnError> {
        for (index, (layer, &rate)) in self.layers.iter_mut().zip(rates).enumerate() {
            let spec = layer.spec.with_dropout(rate);
            spec.validate(index)?;
            layer.spec = spec;
        }
        Ok(())
    }

    fn check_input(&self, dim: usize) -> Result<(), NnError> {
        if dim != self.input_dim() {
            return Err(NnError::DimMismatch {
                expected: self.input_dim(),
                found: dim,
            });
        }
        Ok(())
    }

    fn trace(&self, x: ArrayView2<f64>, mode: Mode) -> Result<Trace, NnError> {
        self.check_input(x.ncols())?;
        let mut rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Mode::Infer => None,
        };
        let n = self.layers.len();
        let mut trace = Trace {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            probs: Array2::zeros((0, 0)),
        };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let act = layer.spec.activation;
            let a = z.mapv(|v| act.apply(v));
            let rate = layer.spec.dropout_rate;
            let mask = match rng.as_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    Some(Array2::from_shape_simple_fn(a.raw_dim(), || {
                        if rng.gen::<f64>() < rate {
                            0.0
                        } else {
                            keep
                        }
                    }))
                }
                _ => None,
            };
            let out = match &mask {
                Some(m) => &a * m,
                None => a.clone(),
            };
            trace.inputs.push(std::mem::replace(&mut h, out));
            trace.pre.push(z);
            trace.post.push(a);
            trace.masks.push(mask);
        }
        trace.probs = softmax_rows(&h);
        Ok(trace)
    }

    /// Class probabilities for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>, NnError> {
        Ok(self.trace(x, mode)?.probs)
    }

    pub fn forward(&self, x: &PairFeatures, mode: Mode) -> Result<[f64; 3], NnError> {
        self.forward_slice(x.values(), mode)
    }

    pub fn forward_slice(&self, x: &[f64], mode: Mode) -> Result<[f64; 3], NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let probs = self.forward_batch(view, mode)?;
        Ok([probs[[0, 0]], probs[[0, 1]], probs[[0, 2]]])
    }

    /// Mean cross-entropy plus activity regularization.
    pub fn loss(&self, x: ArrayView2<f64>, labels: &[usize], mode: Mode) -> Result<f64, NnError> {
        check_batch(x, labels)?;
        let trace = self.trace(x, mode)?;
        Ok(self.loss_from_trace(&trace, labels))
    }

    fn loss_from_trace(&self, trace: &Trace, labels: &[usize]) -> f64 {
        let batch = labels.len() as f64;
        let ce: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| -trace.probs[[r, y]].max(LOG_CLAMP).ln())
            .sum::<f64>()
            / batch;
        let reg: f64 = self
            .layers
            .iter()
            .zip(&trace.post)
            .filter(|(l, _)| l.spec.activity_reg > 0.0)
            .map(|(l, a)| l.spec.activity_reg * a.iter().map(|v| v * v).sum::<f64>() / batch)
            .sum();
        ce + reg
    }

    /// Loss and its exact gradient for a batch. In `Train` mode the dropout
    /// masks are fixed by the seed, so repeated calls agree.
    pub fn gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(f64, Gradients), NnError> {
        check_batch(x, labels)?;
        let trace = self.trace(x, mode)?;
        let loss = self.loss_from_trace(&trace, labels);
        let batch = labels.len() as f64;

        // d loss / d (final layer output)
        let mut dh = trace.probs.clone();
        for (r, &y) in labels.iter().enumerate() {
            let mut row = dh.row_mut(r);
            if trace.probs[[r, y]] < LOG_CLAMP {
                row.fill(0.0);
            } else {
                row[y] -= 1.0;
                row.mapv_inplace(|v| v / batch);
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let a = &trace.post[k];
            let mut da = match &trace.masks[k] {
                Some(m) => dh * m,
                None => dh,
            };
            let coeff = layer.spec.activity_reg;
            if coeff > 0.0 {
                da.scaled_add(2.0 * coeff / batch, a);
            }
            let act = layer.spec.activation;
            Zip::from(&mut da)
                .and(&trace.pre[k])
                .and(a)
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            let dz = da;
            let dw = trace.inputs[k].t().dot(&dz);
            let db = dz.sum_axis(Axis(0));
            dh = dz.dot(&layer.weights.t());
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// Argmax class (lowest index on ties) and inference probabilities.
    pub fn predict(&self, x: &PairFeatures) -> Result<(usize, [f64; 3]), NnError> {
        let probs = self.forward(x, Mode::Infer)?;
        Ok((argmax(&probs), probs))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<(usize, [f64; 3])>, NnError> {
        let probs = self.forward_batch(x, Mode::Infer)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                let p = [row[0], row[1], row[2]];
                (argmax(&p), p)
            })
            .collect())
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<(), NnError> {
    let last = specs.last().ok_or(NnError::NoLayers)?;
    for (index, spec) in specs.iter().enumerate() {
        spec.validate(index)?;
        if let Some(next) = specs.get(index + 1) {
            if spec.out_dim != next.in_dim {
                return Err(NnError::InvalidLayer {
                    index: index + 1,
                    reason: format!("input {} does not chain from {}", next.in_dim, spec.out_dim),
                });
            }
        }
    }
    if last.out_dim != NUM_CLASSES || last.activation != Activation::Sigmoid {
        return Err(NnError::InvalidLayer {
            index: specs.len() - 1,
            reason: format!("output layer must be {NUM_CLASSES} sigmoid units"),
        });
    }
    Ok(())
}

fn check_batch(x: ArrayView2<f64>, labels: &[usize]) -> Result<(), NnError> {
    if labels.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if x.nrows() != labels.len() {
        return Err(NnError::BatchMismatch {
            rows: x.nrows(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= NUM_CLASSES) {
        return Err(NnError::BadLabel(bad));
    }
    Ok(())
}

fn softmax_rows(h: &Array2<f64>) -> Array2<f64> {
    let mut out = h.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
