//! End-to-end orchestration: join embeddings to manifests, train the two
//! sub-task classifiers, predict and consolidate, evaluate.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evec::{read_evec, EvecError, EvecStore};
use crate::features::{assemble, FeatureError};
use crate::label::{
    compose, consolidate, decompose, FactifyLabel, Heuristic, HeuristicRegistry, ImageLabel,
    LabelError, LabelPair, RewriteRule, RewriteTable, TextLabel, DEFAULT_HEURISTIC,
};
use crate::manifest::{ManifestError, ManifestRecord};
use crate::metrics::{confusion, report, ClassReport, ConfusionMatrix, MetricsError};
use crate::nn::{
    accuracy, fit_with, load_model, save_model, Dataset, LossHistory, MlpModel, NnError, NnwtError,
    OptimizerRegistry, Preset, TrainConfig, DEFAULT_ACTIVITY_REG,
};

pub const SEED_ENV: &str = "ENTAIL_SEED";
pub const TEXT_MODEL_FILE: &str = "text.nnwt";
pub const IMAGE_MODEL_FILE: &str = "image.nnwt";
pub const HISTORY_FILE: &str = "history.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Evec { path: PathBuf, source: EvecError },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: NnwtError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("config: {0}")]
    Config(String),
    #[error("record {id:?} has no category")]
    MissingCategory { id: String },
    #[error("ids missing from {store} embeddings: {}", ids.join(", "))]
    MissingEmbeddings {
        store: &'static str,
        ids: Vec<String>,
    },
    #[error("claim embeddings have dim {claim} but document embeddings have dim {doc}")]
    StoreDimMismatch { claim: usize, doc: usize },
    #[error("{modality} embeddings must have dim {expected}, found {found}")]
    EmbeddingDim {
        modality: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("prediction for {id:?} has no gold label in the manifest")]
    NoGold { id: String },
    #[error("predictions line {line}: {message}")]
    BadPrediction { line: usize, message: String },
}

impl PipelineError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Errors caused by how the tool was invoked rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            PipelineError::Label(LabelError::UnknownHeuristic(_))
                | PipelineError::Nn(NnError::UnknownOptimizer(_))
                | PipelineError::Config(_)
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutOverrides {
    /// Rates for the two hidden text layers.
    pub text: Option<Vec<f64>>,
    /// Rate for the hidden image layer.
    pub image: Option<Vec<f64>>,
}

/// JSON run configuration. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub activity_reg_coeff: f64,
    pub dropout: DropoutOverrides,
    pub heuristic: String,
    /// Extra rewrite tables registered next to the built-in heuristics.
    pub custom_heuristics: BTreeMap<String, Vec<RewriteRule>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            optimizer: t.optimizer,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            shuffle: t.shuffle,
            activity_reg_coeff: DEFAULT_ACTIVITY_REG,
            dropout: DropoutOverrides::default(),
            heuristic: DEFAULT_HEURISTIC.into(),
            custom_heuristics: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(PipelineError::io(path))?)
    }

    /// Applies `ENTAIL_SEED` when it is set.
    pub fn with_env_seed(self) -> Result<Self, PipelineError> {
        match std::env::var(SEED_ENV) {
            Ok(v) => self.with_seed_override(Some(&v)),
            Err(_) => Ok(self),
        }
    }

    pub fn with_seed_override(mut self, value: Option<&str>) -> Result<Self, PipelineError> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| PipelineError::Config(format!("{SEED_ENV}={v:?} is not a u64")))?;
        }
        Ok(self)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer.clone(),
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }

    pub fn heuristics(&self) -> Result<HeuristicRegistry, PipelineError> {
        let mut reg = HeuristicRegistry::with_builtins();
        for (name, rules) in &self.custom_heuristics {
            let table = RewriteTable::new(name.clone(), rules)
                .map_err(|e| PipelineError::Config(format!("heuristic {name}: {e}")))?;
            reg.register(Arc::new(table));
        }
        Ok(reg)
    }

    fn layers(&self, preset: Preset) -> Result<Vec<crate::nn::LayerSpec>, PipelineError> {
        let (overrides, key) = match preset {
            Preset::TextEntail => (&self.dropout.text, "text"),
            Preset::ImageEntail => (&self.dropout.image, "image"),
        };
        let defaults = preset.hidden_dropout();
        let rates = overrides.clone().unwrap_or_else(|| defaults.clone());
        if rates.len() != defaults.len() {
            return Err(PipelineError::Config(format!(
                "dropout.{key} needs {} rates, got {}",
                defaults.len(),
                rates.len()
            )));
        }
        Ok(preset.layers_with(&rates, self.activity_reg_coeff))
    }
}

/// The four embedding stores, in the order text-claim, text-doc,
/// image-claim, image-doc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingPaths {
    pub text_claims: PathBuf,
    pub text_docs: PathBuf,
    pub image_claims: PathBuf,
    pub image_docs: PathBuf,
}

impl EmbeddingPaths {
    /// `text_claims.evec`, `text_docs.evec`, ... inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            text_claims: dir.join("text_claims.evec"),
            text_docs: dir.join("text_docs.evec"),
            image_claims: dir.join("image_claims.evec"),
            image_docs: dir.join("image_docs.evec"),
        }
    }
}

struct Stores {
    text_claims: EvecStore,
    text_docs: EvecStore,
    image_claims: EvecStore,
    image_docs: EvecStore,
}

fn read_store(path: &Path) -> Result<EvecStore, PipelineError> {
    read_evec(path).map_err(|source| PipelineError::Evec {
        path: path.to_path_buf(),
        source,
    })
}

impl Stores {
    fn read(paths: &EmbeddingPaths) -> Result<Self, PipelineError> {
        Ok(Self {
            text_claims: read_store(&paths.text_claims)?,
            text_docs: read_store(&paths.text_docs)?,
            image_claims: read_store(&paths.image_claims)?,
            image_docs: read_store(&paths.image_docs)?,
        })
    }

    fn text_features(&self, manifest: &[ManifestRecord]) -> Result<Array2<f64>, PipelineError> {
        check_dim(
            "text",
            Preset::TextEntail,
            &self.text_claims,
            &self.text_docs,
        )?;
        join(manifest, &self.text_claims, &self.text_docs)
    }

    fn image_features(&self, manifest: &[ManifestRecord]) -> Result<Array2<f64>, PipelineError> {
        check_dim(
            "image",
            Preset::ImageEntail,
            &self.image_claims,
            &self.image_docs,
        )?;
        join(manifest, &self.image_claims, &self.image_docs)
    }
}

fn check_dim(
    modality: &'static str,
    preset: Preset,
    claims: &EvecStore,
    docs: &EvecStore,
) -> Result<(), PipelineError> {
    let expected = preset.input_dim() / 2;
    for store in [claims, docs] {
        if store.dim() != expected {
            return Err(PipelineError::EmbeddingDim {
                modality,
                expected,
                found: store.dim(),
            });
        }
    }
    Ok(())
}

/// One assembled feature row per manifest record, in manifest order.
pub fn join(
    manifest: &[ManifestRecord],
    claims: &EvecStore,
    docs: &EvecStore,
) -> Result<Array2<f64>, PipelineError> {
    if claims.dim() != docs.dim() {
        return Err(PipelineError::StoreDimMismatch {
            claim: claims.dim(),
            doc: docs.dim(),
        });
    }
    for (store, name) in [(claims, "claim"), (docs, "document")] {
        let missing: Vec<String> = manifest
            .iter()
            .filter(|r| store.get(&r.id).is_none())
            .map(|r| r.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(PipelineError::MissingEmbeddings {
                store: name,
                ids: missing,
            });
        }
    }
    let width = 2 * claims.dim() + 1;
    let mut rows = Array2::zeros((manifest.len(), width));
    for (mut row, rec) in rows.rows_mut().into_iter().zip(manifest) {
        let claim = claims.embedding(&rec.id).expect("checked above");
        let doc = docs.embedding(&rec.id).expect("checked above");
        let features = assemble(&claim, &doc)?;
        row.assign(&ndarray::ArrayView1::from(features.values()));
    }
    Ok(rows)
}

/// Sub-task training labels for each record: (text indices, image indices).
pub fn sub_task_labels(
    manifest: &[ManifestRecord],
) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    manifest
        .iter()
        .map(|r| {
            let gold = r
                .category
                .ok_or_else(|| PipelineError::MissingCategory { id: r.id.clone() })?;
            let pair = decompose(gold);
            Ok((pair.text.index(), pair.image.index()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().unzip())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub records: usize,
    pub seed: u64,
    pub text_loss: LossHistory,
    pub image_loss: LossHistory,
    pub text_train_accuracy: f64,
    pub image_train_accuracy: f64,
}

/// Trains both classifiers and writes `text.nnwt`, `image.nnwt` and
/// `history.json` into `out_dir`.
pub fn train_pipeline(
    manifest: &[ManifestRecord],
    paths: &EmbeddingPaths,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<TrainSummary, PipelineError> {
    let text_layers = config.layers(Preset::TextEntail)?;
    let image_layers = config.layers(Preset::ImageEntail)?;
    let (text_y, image_y) = sub_task_labels(manifest)?;
    let stores = Stores::read(paths)?;
    let text = Dataset::new(stores.text_features(manifest)?, text_y)?;
    let image = Dataset::new(stores.image_features(manifest)?, image_y)?;
    drop(stores);

    let optimizers = OptimizerRegistry::with_builtins();
    let train = config.train_config();
    let text_model = MlpModel::init(&text_layers, config.seed)?;
    let (text_model, text_loss) = fit_with(text_model, &text, &train, &optimizers)?;
    let image_seed = config.seed.wrapping_add(1);
    let image_model = MlpModel::init(&image_layers, image_seed)?;
    let image_train = TrainConfig {
        seed: image_seed,
        ..train
    };
    let (image_model, image_loss) = fit_with(image_model, &image, &image_train, &optimizers)?;

    let summary = TrainSummary {
        records: manifest.len(),
        seed: config.seed,
        text_train_accuracy: accuracy(&text_model, &text)?,
        image_train_accuracy: accuracy(&image_model, &image)?,
        text_loss,
        image_loss,
    };

    fs::create_dir_all(out_dir).map_err(PipelineError::io(out_dir))?;
    for (model, file) in [
        (&text_model, TEXT_MODEL_FILE),
        (&image_model, IMAGE_MODEL_FILE),
    ] {
        let path = out_dir.join(file);
        save_model(model, &path).map_err(|source| PipelineError::Model { path, source })?;
    }
    let history = out_dir.join(HISTORY_FILE);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&history, json + "\n").map_err(PipelineError::io(&history))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub text_label: TextLabel,
    pub image_label: ImageLabel,
    pub pair_valid: bool,
    pub final_label: FactifyLabel,
    pub text_probs: [f64; 3],
    pub image_probs: [f64; 3],
}

impl PredictionRecord {
    pub fn raw_pair(&self) -> LabelPair {
        LabelPair::new(self.text_label, self.image_label)
    }

    /// `pair_valid` and `final_label` agree with the raw pair under `heuristic`.
    pub fn is_consistent(&self, heuristic: &dyn Heuristic) -> bool {
        let pair = self.raw_pair();
        self.pair_valid == compose(pair).is_valid()
            && self.final_label == consolidate(pair, heuristic)
    }
}

/// Trained text and image classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub text: MlpModel,
    pub image: MlpModel,
}

impl ModelPair {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let load = |file: &str| {
            let path = dir.join(file);
            load_model(&path).map_err(|source| PipelineError::Model { path, source })
        };
        Ok(Self {
            text: load(TEXT_MODEL_FILE)?,
            image: load(IMAGE_MODEL_FILE)?,
        })
    }
}

/// Raw sub-task predictions consolidated under `heuristic`, in manifest order.
pub fn predict_pipeline(
    manifest: &[ManifestRecord],
    paths: &EmbeddingPaths,
    models: &ModelPair,
    heuristic: &dyn Heuristic,
) -> Result<Vec<PredictionRecord>, PipelineError> {
    let stores = Stores::read(paths)?;
    let text = models
        .text
        .predict_batch(stores.text_features(manifest)?.view())?;
    let image = models
        .image
        .predict_batch(stores.image_features(manifest)?.view())?;
    manifest
        .iter()
        .zip(text.into_iter().zip(image))
        .map(|(rec, ((t, text_probs), (i, image_probs)))| {
            let pair = LabelPair::from_indices(t, i)?;
            Ok(PredictionRecord {
                id: rec.id.clone(),
                text_label: pair.text,
                image_label: pair.image,
                pair_valid: compose(pair).is_valid(),
                final_label: consolidate(pair, heuristic),
                text_probs,
                image_probs,
            })
        })
        .collect()
}

pub fn predictions_to_jsonl(predictions: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(
    predictions: &[PredictionRecord],
    path: &Path,
) -> Result<(), PipelineError> {
    fs::write(path, predictions_to_jsonl(predictions)).map_err(PipelineError::io(path))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::BadPrediction {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Scores final labels against the manifest's gold categories.
pub fn evaluate_pipeline(
    predictions: &[PredictionRecord],
    manifest: &[ManifestRecord],
) -> Result<(ClassReport, ConfusionMatrix), PipelineError> {
    let gold_by_id: BTreeMap<&str, Option<FactifyLabel>> = manifest
        .iter()
        .map(|r| (r.id.as_str(), r.category))
        .collect();
    let mut gold = Vec::with_capacity(predictions.len());
    let mut pred = Vec::with_capacity(predictions.len());
    for p in predictions {
        match gold_by_id.get(p.id.as_str()) {
            Some(Some(g)) => {
                gold.push(*g);
                pred.push(p.final_label);
            }
            _ => return Err(PipelineError::NoGold { id: p.id.clone() }),
        }
    }
    let cm = confusion(&gold, &pred)?;
    Ok((report(&cm)?, cm))
}
