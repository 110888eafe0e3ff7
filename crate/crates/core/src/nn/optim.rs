//! Parameter update rules, selectable by name.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, Zip};

use super::model::{Gradients, MlpModel};
use super::NnError;

pub trait Optimizer: Send {
    fn name(&self) -> &str;

    /// Applies one update using gradients computed for the current parameters.
    fn step(&mut self, model: &mut MlpModel, grads: &Gradients);
}

/// Plain gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Optimizer for Sgd {
    fn name(&self) -> &str {
        "sgd"
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        let lr = self.learning_rate;
        for ((w, b), (gw, gb)) in model.params_mut().zip(&grads.layers) {
            w.scaled_add(-lr, gw);
            b.scaled_add(-lr, gb);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: i32,
    moments: Vec<Moments>,
}

#[derive(Debug, Clone)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            moments: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &str {
        "adam"
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        if self.moments.is_empty() {
            self.moments = grads
                .layers
                .iter()
                .map(|(gw, gb)| Moments {
                    m_w: Array2::zeros(gw.raw_dim()),
                    v_w: Array2::zeros(gw.raw_dim()),
                    m_b: Array1::zeros(gb.raw_dim()),
                    v_b: Array1::zeros(gb.raw_dim()),
                })
                .collect();
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.learning_rate;
        let update = move |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((w, b), (gw, gb)), mo) in model.params_mut().zip(&grads.layers).zip(&mut self.moments)
        {
            Zip::from(w)
                .and(&mut mo.m_w)
                .and(&mut mo.v_w)
                .and(gw)
                .for_each(update);
            Zip::from(b)
                .and(&mut mo.m_b)
                .and(&mut mo.v_b)
                .and(gb)
                .for_each(update);
        }
    }
}

type Factory = Box<dyn Fn(f64) -> Box<dyn Optimizer> + Send + Sync>;

/// Optimizer constructors keyed by lowercase name.
pub struct OptimizerRegistry {
    factories: BTreeMap<String, Factory>,
}

impl OptimizerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `sgd` and `adam`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("sgd", |lr| Box::new(Sgd { learning_rate: lr }));
        reg.register("adam", |lr| Box::new(Adam::new(lr)));
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(f64) -> Box<dyn Optimizer> + Send + Sync + 'static,
    {
        self.factories
            .insert(name.to_ascii_lowercase(), Box::new(factory));
    }

    /// Case-insensitive lookup.
    pub fn create(&self, name: &str, learning_rate: f64) -> Result<Box<dyn Optimizer>, NnError> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|f| f(learning_rate))
            .ok_or_else(|| NnError::UnknownOptimizer(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl fmt::Debug for OptimizerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}
