//! Native multi-label classifier: hashed character n-gram TF-IDF features
//! under one-vs-rest logistic regression, trained with mini-batch gradient
//! descent on per-class binary cross-entropy.
//!
//! The model stands in for a fine-tuned transformer at desk scale. Its
//! contract is the same (text in, one probability per technique out), so
//! everything downstream (thresholding, calibration, ensembling) is
//! agnostic about where a probability table came from.
//!
//! Everything here is bitwise deterministic given (data, config, seed):
//! n-gram multisets and gradient buffers live in ordered maps, the epoch
//! shuffle uses a seeded ChaCha stream, and accumulation order is fixed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TechniqueVocabulary};
use crate::error::{Error, Result};
use crate::evaluate::{ProbabilityTable, TableRow};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::scalar::Real;

/// Character n-gram featurizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    /// Shortest n-gram length, in codepoints.
    #[serde(default = "default_ngram_min")]
    pub ngram_min: usize,
    /// Longest n-gram length, in codepoints.
    #[serde(default = "default_ngram_max")]
    pub ngram_max: usize,
    /// Hashed feature-space size; must be a power of two.
    #[serde(default = "default_hash_dim")]
    pub hash_dim: u32,
    /// Truncation length in codepoints, applied before n-gram extraction.
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

fn default_ngram_min() -> usize {
    2
}
fn default_ngram_max() -> usize {
    4
}
fn default_hash_dim() -> u32 {
    1 << 18
}
fn default_max_chars() -> usize {
    2000
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            ngram_min: default_ngram_min(),
            ngram_max: default_ngram_max(),
            hash_dim: default_hash_dim(),
            max_chars: default_max_chars(),
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_min < 1 {
            return Err(Error::InvalidGrid("ngram_min must be at least 1".into()));
        }
        if self.ngram_max < self.ngram_min {
            return Err(Error::InvalidGrid("ngram_max must be >= ngram_min".into()));
        }
        if self.hash_dim < 2 || !self.hash_dim.is_power_of_two() {
            return Err(Error::InvalidGrid("hash_dim must be a power of two >= 2".into()));
        }
        if self.max_chars < 1 {
            return Err(Error::InvalidGrid("max_chars must be at least 1".into()));
        }
        Ok(())
    }
}

/// FNV-1a 64-bit over the UTF-8 bytes of an n-gram.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Feature index of one n-gram for a power-of-two `hash_dim`.
pub fn hash_ngram(gram: &str, hash_dim: u32) -> u32 {
    (fnv1a64(gram.as_bytes()) & u64::from(hash_dim - 1)) as u32
}

/// Multiset of character n-grams after truncation to `max_chars` codepoints.
pub fn extract_ngrams(text: &str, config: &FeaturizerConfig) -> BTreeMap<String, u32> {
    let chars: Vec<char> = text.chars().take(config.max_chars).collect();
    let mut grams = BTreeMap::new();
    for n in config.ngram_min..=config.ngram_max {
        if chars.len() < n {
            break;
        }
        for window in chars.windows(n) {
            let gram: String = window.iter().collect();
            *grams.entry(gram).or_insert(0) += 1;
        }
    }
    grams
}

/// Per-feature document frequencies from a training pass.
///
/// The table stores exact integer counts; the idf weight
/// `ln((1 + N) / (1 + df)) + 1` is computed on demand in the requested
/// scalar type, so the table itself is scalar-agnostic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdfTable {
    doc_count: u64,
    df: BTreeMap<u32, u32>,
}

impl IdfTable {
    /// Counts, per hashed feature index, the documents containing it.
    pub fn fit(gram_sets: &[BTreeMap<String, u32>], config: &FeaturizerConfig) -> IdfTable {
        let mut df: BTreeMap<u32, u32> = BTreeMap::new();
        for grams in gram_sets {
            let indices: std::collections::BTreeSet<u32> = grams
                .keys()
                .map(|g| hash_ngram(g, config.hash_dim))
                .collect();
            for j in indices {
                *df.entry(j).or_insert(0) += 1;
            }
        }
        IdfTable {
            doc_count: gram_sets.len() as u64,
            df,
        }
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn document_frequency(&self, index: u32) -> u32 {
        self.df.get(&index).copied().unwrap_or(0)
    }

    /// Smoothed idf weight for one feature index.
    pub fn weight<S: Real>(&self, index: u32) -> S {
        let n = from_u64::<S>(self.doc_count + 1);
        let d = from_u64::<S>(u64::from(self.document_frequency(index)) + 1);
        (n / d).ln() + S::one()
    }
}

fn from_u64<S: Real>(n: u64) -> S {
    <S as num_traits::FromPrimitive>::from_u64(n).expect("count fits scalar")
}

/// Sparse feature vector with index-sorted entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec<S> {
    entries: Vec<(u32, S)>,
}

impl<S: Real> SparseVec<S> {
    /// Builds a vector from arbitrary entries, merging duplicate indices.
    pub fn from_entries(entries: Vec<(u32, S)>) -> Self {
        let mut map: BTreeMap<u32, S> = BTreeMap::new();
        for (j, v) in entries {
            let slot = map.entry(j).or_insert_with(S::zero);
            *slot = *slot + v;
        }
        SparseVec {
            entries: map.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, S)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l2_norm(&self) -> S {
        self.entries
            .iter()
            .map(|&(_, v)| v * v)
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }
}

/// TF-IDF vector for a text: hashed counts scaled by idf, L2-normalized
/// unless all-zero.
pub fn featurize<S: Real>(text: &str, config: &FeaturizerConfig, idf: &IdfTable) -> SparseVec<S> {
    featurize_counts(&extract_ngrams(text, config), config, idf)
}

fn featurize_counts<S: Real>(
    grams: &BTreeMap<String, u32>,
    config: &FeaturizerConfig,
    idf: &IdfTable,
) -> SparseVec<S> {
    // Integer counts are pooled per index first so that hash collisions
    // cannot make the float accumulation order-dependent.
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for (gram, &count) in grams {
        *counts.entry(hash_ngram(gram, config.hash_dim)).or_insert(0) += u64::from(count);
    }
    let mut entries: Vec<(u32, S)> = counts
        .into_iter()
        .map(|(j, c)| (j, from_u64::<S>(c) * idf.weight::<S>(j)))
        .collect();
    let norm = entries
        .iter()
        .map(|&(_, v)| v * v)
        .fold(S::zero(), |a, b| a + b)
        .sqrt();
    if norm > S::zero() {
        for entry in &mut entries {
            entry.1 = entry.1 / norm;
        }
    }
    SparseVec { entries }
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings<S> {
    pub featurizer: FeaturizerConfig,
    pub preprocess: PreprocessConfig,
    pub epochs: u32,
    pub learning_rate: S,
    pub batch_size: usize,
    pub seed: u64,
}

impl<S: Real> Default for TrainSettings<S> {
    fn default() -> Self {
        TrainSettings {
            featurizer: FeaturizerConfig::default(),
            preprocess: PreprocessConfig::default(),
            epochs: 20,
            learning_rate: S::from_f64_lossy(0.1),
            batch_size: 16,
            seed: 42,
        }
    }
}

/// One-vs-rest linear model over hashed TF-IDF features.
///
/// Weights are stored row-major per class (`weights[c * hash_dim + j]`).
/// The model carries its full feature pipeline (featurizer, idf table,
/// preprocessing flags), so predictions depend on nothing external.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel<S> {
    pub vocabulary: TechniqueVocabulary,
    pub featurizer: FeaturizerConfig,
    pub preprocess: PreprocessConfig,
    pub idf: IdfTable,
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub seed: u64,
    pub epoch_losses: Vec<S>,
}

fn sigmoid<S: Real>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

fn logit<S: Real>(weights: &[S], bias: &[S], dim: usize, class: usize, x: &SparseVec<S>) -> S {
    let row = &weights[class * dim..(class + 1) * dim];
    let mut z = bias[class];
    for &(j, v) in x.entries() {
        z = z + row[j as usize] * v;
    }
    z
}

/// Mean binary cross-entropy over all (sample, class) pairs.
///
/// Uses the direct `-(y ln p + (1-y) ln(1-p))` form: once a logit saturates
/// against a disagreeing label the loss is infinite, which is exactly the
/// divergence signal the trainer checks for.
pub fn mean_bce_loss<S: Real>(
    weights: &[S],
    bias: &[S],
    dim: usize,
    n_classes: usize,
    features: &[SparseVec<S>],
    labels: &[Vec<bool>],
) -> S {
    let mut total = S::zero();
    for (x, y) in features.iter().zip(labels) {
        for (c, &positive) in y.iter().enumerate().take(n_classes) {
            let p = sigmoid(logit(weights, bias, dim, c, x));
            let term = if positive { p.ln() } else { (S::one() - p).ln() };
            total = total - term;
        }
    }
    total / from_u64::<S>((features.len() * n_classes) as u64)
}

/// Gradient of [`mean_bce_loss`] over one batch, accumulated sparsely.
///
/// Returns per-class feature gradients plus the bias gradient. This is the
/// exact routine the trainer applies, which is what the finite-difference
/// checks exercise.
pub fn batch_gradient<S: Real>(
    weights: &[S],
    bias: &[S],
    dim: usize,
    n_classes: usize,
    features: &[&SparseVec<S>],
    labels: &[&[bool]],
) -> (Vec<BTreeMap<u32, S>>, Vec<S>) {
    let scale = S::one() / from_u64::<S>((features.len() * n_classes) as u64);
    let mut grad_w: Vec<BTreeMap<u32, S>> = vec![BTreeMap::new(); n_classes];
    let mut grad_b = vec![S::zero(); n_classes];
    for (x, y) in features.iter().zip(labels) {
        for c in 0..n_classes {
            let p = sigmoid(logit(weights, bias, dim, c, x));
            let target = if y[c] { S::one() } else { S::zero() };
            let residual = (p - target) * scale;
            grad_b[c] = grad_b[c] + residual;
            let row = &mut grad_w[c];
            for &(j, v) in x.entries() {
                let slot = row.entry(j).or_insert_with(S::zero);
                *slot = *slot + residual * v;
            }
        }
    }
    (grad_w, grad_b)
}

/// Trains the one-vs-rest model on a corpus with gold labels.
///
/// Sample order is reshuffled each epoch from a ChaCha stream seeded with
/// `settings.seed`; the run is reproducible bit for bit. Errors with
/// [`Error::NonFiniteLoss`] when an epoch ends with a non-finite mean loss.
pub fn train<S: Real>(corpus: &Corpus, settings: &TrainSettings<S>) -> Result<BaselineModel<S>> {
    let _ = corpus.gold.as_ref().ok_or(Error::MissingGold)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    settings.featurizer.validate()?;

    let n_classes = corpus.vocabulary.len();
    let dim = settings.featurizer.hash_dim as usize;

    let gram_sets: Vec<BTreeMap<String, u32>> = corpus
        .paragraphs
        .iter()
        .map(|p| extract_ngrams(&preprocess(&p.text, &settings.preprocess), &settings.featurizer))
        .collect();
    let idf = IdfTable::fit(&gram_sets, &settings.featurizer);
    let features: Vec<SparseVec<S>> = gram_sets
        .iter()
        .map(|g| featurize_counts(g, &settings.featurizer, &idf))
        .collect();
    let labels: Vec<Vec<bool>> = corpus
        .paragraphs
        .iter()
        .map(|p| {
            let gold = corpus.gold_for(&p.key);
            corpus
                .vocabulary
                .names()
                .iter()
                .map(|name| gold.contains(name))
                .collect()
        })
        .collect();

    let mut weights = vec![S::zero(); n_classes * dim];
    let mut bias = vec![S::zero(); n_classes];
    let mut epoch_losses = Vec::with_capacity(settings.epochs as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let batch_size = settings.batch_size.max(1);

    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let batch_features: Vec<&SparseVec<S>> = batch.iter().map(|&i| &features[i]).collect();
            let batch_labels: Vec<&[bool]> = batch.iter().map(|&i| labels[i].as_slice()).collect();
            let (grad_w, grad_b) =
                batch_gradient(&weights, &bias, dim, n_classes, &batch_features, &batch_labels);
            for (c, row) in grad_w.iter().enumerate() {
                for (&j, &g) in row {
                    let idx = c * dim + j as usize;
                    weights[idx] = weights[idx] - settings.learning_rate * g;
                }
            }
            for (c, &g) in grad_b.iter().enumerate() {
                bias[c] = bias[c] - settings.learning_rate * g;
            }
        }
        let loss = mean_bce_loss(&weights, &bias, dim, n_classes, &features, &labels);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epoch_losses.push(loss);
    }

    Ok(BaselineModel {
        vocabulary: corpus.vocabulary.clone(),
        featurizer: settings.featurizer,
        preprocess: settings.preprocess,
        idf,
        weights,
        bias,
        seed: settings.seed,
        epoch_losses,
    })
}

/// Probability table for a corpus, one row per paragraph in corpus order.
///
/// Applies the model's stored preprocessing and truncation, so any corpus,
/// including unseen languages, goes through the training-time pipeline.
pub fn predict_probs<S: Real>(model: &BaselineModel<S>, corpus: &Corpus) -> Result<ProbabilityTable<S>> {
    if corpus.vocabulary != model.vocabulary {
        return Err(Error::VocabularyMismatch(
            "corpus vocabulary differs from the model's".to_string(),
        ));
    }
    let dim = model.featurizer.hash_dim as usize;
    let n_classes = model.vocabulary.len();
    // Sigmoid output saturates to exactly 0 or 1 for extreme logits; pin
    // probabilities strictly inside (0, 1).
    let lo = S::epsilon();
    let hi = S::one() - S::epsilon();
    let rows = corpus
        .paragraphs
        .iter()
        .map(|p| {
            let x = featurize::<S>(&preprocess(&p.text, &model.preprocess), &model.featurizer, &model.idf);
            let probs = (0..n_classes)
                .map(|c| sigmoid(logit(&model.weights, &model.bias, dim, c, &x)).max(lo).min(hi))
                .collect();
            TableRow {
                key: p.key.clone(),
                language: p.language.clone(),
                probs,
            }
        })
        .collect();
    ProbabilityTable::new(model.vocabulary.clone(), rows)
}

const MODEL_FORMAT: &str = "ptd-baseline/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    seed: u64,
    featurizer: FeaturizerConfig,
    preprocess: PreprocessConfig,
    vocabulary: Vec<String>,
    idf_doc_count: u64,
    idf_df: Vec<(u32, u32)>,
    bias: Vec<f64>,
    /// Sparse columns: feature index plus one weight per class.
    weights: Vec<(u32, Vec<f64>)>,
    epoch_losses: Vec<f64>,
}

impl<S: Real> BaselineModel<S> {
    pub fn to_json(&self) -> String {
        let dim = self.featurizer.hash_dim as usize;
        let n_classes = self.vocabulary.len();
        let mut columns = Vec::new();
        for j in 0..dim {
            let col: Vec<f64> = (0..n_classes)
                .map(|c| self.weights[c * dim + j].into_f64())
                .collect();
            if col.iter().any(|&w| w != 0.0) {
                columns.push((j as u32, col));
            }
        }
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            seed: self.seed,
            featurizer: self.featurizer,
            preprocess: self.preprocess,
            vocabulary: self.vocabulary.names().to_vec(),
            idf_doc_count: self.idf.doc_count,
            idf_df: self.idf.df.iter().map(|(&j, &d)| (j, d)).collect(),
            bias: self.bias.iter().map(|b| b.into_f64()).collect(),
            weights: columns,
            epoch_losses: self.epoch_losses.iter().map(|l| l.into_f64()).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(json).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "expected {MODEL_FORMAT:?}, found {:?}",
                file.format
            )));
        }
        file.featurizer.validate()?;
        let vocabulary = TechniqueVocabulary::new(file.vocabulary)?;
        let n_classes = vocabulary.len();
        let dim = file.featurizer.hash_dim as usize;
        if file.bias.len() != n_classes {
            return Err(Error::ModelFormat("bias length != class count".to_string()));
        }
        let mut weights = vec![S::zero(); n_classes * dim];
        for (j, col) in file.weights {
            if j as usize >= dim || col.len() != n_classes {
                return Err(Error::ModelFormat(format!("bad weight column {j}")));
            }
            for (c, w) in col.into_iter().enumerate() {
                weights[c * dim + j as usize] = S::from_f64_lossy(w);
            }
        }
        Ok(BaselineModel {
            vocabulary,
            featurizer: file.featurizer,
            preprocess: file.preprocess,
            idf: IdfTable {
                doc_count: file.idf_doc_count,
                df: file.idf_df.into_iter().collect(),
            },
            weights,
            bias: file.bias.into_iter().map(S::from_f64_lossy).collect(),
            seed: file.seed,
            epoch_losses: file.epoch_losses.into_iter().map(S::from_f64_lossy).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }
}
