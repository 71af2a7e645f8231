//! Desk-scale toolkit for multi-label persuasion-technique detection.
//!
//! The crate covers the full experiment loop: parsing the tab-separated
//! corpus formats, optional text preprocessing, a deterministic hashed
//! character n-gram classifier, confidence-threshold decoding and
//! calibration (including a simulated zero-shot protocol), label-union
//! ensembling, micro/macro F1 scoring and diagnostic reports.
//!
//! All numeric code is generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`). The aliases at the crate root fix `f64`, which is what
//! the `ptd` CLI and the file formats use.

pub mod baseline;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod preprocess;
pub mod report;
pub mod scalar;

pub use corpus::{Corpus, GoldLabels, LabelMap, LabelSet, Paragraph, ParagraphKey, TechniqueVocabulary};
pub use error::{Error, Result};
pub use preprocess::PreprocessConfig;

/// Baseline classifier over `f64`, the default scalar.
pub type BaselineModel = baseline::BaselineModel<f64>;
/// Trainer settings over `f64`.
pub type TrainSettings = baseline::TrainSettings<f64>;
/// Per-paragraph class probabilities over `f64`.
pub type ProbabilityTable = evaluate::ProbabilityTable<f64>;
/// Threshold sweep result over `f64`.
pub type CalibrationCurve = evaluate::CalibrationCurve<f64>;
/// Micro/macro F1 report over `f64`.
pub type ScoreReport = evaluate::ScoreReport<f64>;
