//! Decomposed multi-modal entailment classification for fact-checking.
//!
//! A claim (text + image) is checked against a document (text + image) by two
//! independent classifiers: one decides whether the document text entails,
//! does not entail, or refutes the claim text; the other does the same for
//! the images. Their label pair is then mapped onto one of five task classes,
//! with impossible pairs rewritten by a named heuristic.
//!
//! * [`label`]: task classes, sub-labels, consolidation heuristics
//! * [`features`]: `[claim | cosine | document]` input vectors
//! * [`nn`]: the two classifier architectures, training, NNWT model files
//! * [`metrics`]: confusion matrix and weighted F1
//! * [`evec`], [`manifest`]: embedding stores and record manifests
//! * [`pipeline`]: train / predict / evaluate orchestration
//! * [`synth`]: synthetic data with planted entailment structure

mod binio;
pub mod evec;
pub mod features;
pub mod label;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
