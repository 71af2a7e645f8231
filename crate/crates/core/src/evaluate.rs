//! Threshold decoding, F1 scoring, calibration sweeps and label-union
//! ensembling.
//!
//! Decoding is inclusive: a class is predicted when its probability is at
//! least the confidence threshold. Calibration sweeps a decimal grid of
//! thresholds and returns the largest maximizer of micro F1.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{self, BaselineModel, TrainSettings};
use crate::corpus::{split_by_language, Corpus, GoldLabels, LabelMap, LabelSet, ParagraphKey, TechniqueVocabulary};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One paragraph's per-class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow<S> {
    pub key: ParagraphKey,
    pub language: String,
    pub probs: Vec<S>,
}

/// Per-paragraph probability vectors, ordered by the producing corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable<S> {
    pub vocabulary: TechniqueVocabulary,
    pub rows: Vec<TableRow<S>>,
}

#[derive(Serialize, Deserialize)]
struct RowDto {
    article_id: String,
    paragraph_id: u64,
    language: String,
    probs: Vec<f64>,
}

impl<S: Real> ProbabilityTable<S> {
    /// Validates key uniqueness, vector width and the [0, 1] range.
    pub fn new(vocabulary: TechniqueVocabulary, rows: Vec<TableRow<S>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for row in &rows {
            if !seen.insert(row.key.clone()) {
                return Err(Error::DuplicateKey(row.key.to_string()));
            }
            if row.probs.len() != vocabulary.len() {
                return Err(Error::VocabularyMismatch(format!(
                    "row {} has {} probabilities for a vocabulary of {}",
                    row.key,
                    row.probs.len(),
                    vocabulary.len()
                )));
            }
            for &p in &row.probs {
                if !(p >= S::zero() && p <= S::one()) {
                    return Err(Error::ThresholdOutOfRange(p.into_f64()));
                }
            }
        }
        Ok(ProbabilityTable { vocabulary, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn keys(&self) -> BTreeSet<ParagraphKey> {
        self.rows.iter().map(|r| r.key.clone()).collect()
    }

    /// Languages present in the table, sorted.
    pub fn languages(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.language.clone()).collect()
    }

    /// Key → language lookup for per-language reporting.
    pub fn language_map(&self) -> BTreeMap<ParagraphKey, String> {
        self.rows
            .iter()
            .map(|r| (r.key.clone(), r.language.clone()))
            .collect()
    }

    /// Rows restricted to one language, same vocabulary.
    pub fn restrict_to_language(&self, language: &str) -> ProbabilityTable<S> {
        ProbabilityTable {
            vocabulary: self.vocabulary.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r.language == language)
                .cloned()
                .collect(),
        }
    }

    /// Serializes as JSON Lines, one object per row.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let dto = RowDto {
                article_id: row.key.article_id.clone(),
                paragraph_id: row.key.paragraph_id,
                language: row.language.clone(),
                probs: row.probs.iter().map(|p| p.into_f64()).collect(),
            };
            out.push_str(&serde_json::to_string(&dto).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a JSON Lines table produced by this crate or an external model.
    pub fn read_jsonl(path: &Path, vocabulary: &TechniqueVocabulary) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let dto: RowDto = serde_json::from_str(line)
                .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
            rows.push(TableRow {
                key: ParagraphKey::new(dto.article_id, dto.paragraph_id),
                language: dto.language,
                probs: dto.probs.into_iter().map(S::from_f64_lossy).collect(),
            });
        }
        ProbabilityTable::new(vocabulary.clone(), rows)
    }
}

/// Evenly spaced decimal thresholds swept during calibration.
///
/// Points are generated with nanodecimal integer arithmetic so that a grid
/// like 0.05..0.95 step 0.01 contains exactly the decimal values 0.29, 0.40
/// and so on, not float-accumulation neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid {
            start: 0.05,
            stop: 0.95,
            step: 0.01,
        }
    }
}

const GRID_SCALE: f64 = 1e9;

impl ThresholdGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let grid = ThresholdGrid { start, stop, step };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.start) || !(0.0..=1.0).contains(&self.stop) {
            return Err(Error::InvalidGrid("start/stop must lie in [0, 1]".to_string()));
        }
        if self.start >= self.stop {
            return Err(Error::InvalidGrid("start must be below stop".to_string()));
        }
        if (self.step * GRID_SCALE).round() < 1.0 {
            return Err(Error::InvalidGrid("step must be at least 1e-9".to_string()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let start = (self.start * GRID_SCALE).round() as i64;
        let stop = (self.stop * GRID_SCALE).round() as i64;
        let step = (self.step * GRID_SCALE).round() as i64;
        let mut points = Vec::new();
        let mut v = start;
        while v <= stop {
            points.push(v as f64 / GRID_SCALE);
            v += step;
        }
        points
    }
}

/// Snaps `threshold + delta` to a nanodecimal and clamps it into [0, 1].
pub fn adjust_threshold(threshold: f64, delta: f64) -> f64 {
    let sum = ((threshold + delta) * GRID_SCALE).round() / GRID_SCALE;
    sum.clamp(0.0, 1.0)
}

/// Decodes probabilities at a confidence threshold.
///
/// A class is predicted when its probability is at least `threshold`; every
/// table key appears in the result, possibly with an empty set.
pub fn apply_threshold<S: Real>(table: &ProbabilityTable<S>, threshold: f64) -> Result<LabelMap> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::ThresholdOutOfRange(threshold));
    }
    let cut = S::from_f64_lossy(threshold);
    let mut out = LabelMap::new();
    for row in &table.rows {
        let mut set = LabelSet::new();
        for (c, &p) in row.probs.iter().enumerate() {
            if p >= cut {
                set.insert(table.vocabulary.names()[c].clone());
            }
        }
        out.insert(row.key.clone(), set);
    }
    Ok(out)
}

/// TP/FP/FN counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Tally {
    pub fn add(&mut self, other: &Tally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_
    }

    /// F1 with the 0/0 → 0 convention.
    pub fn f1<S: Real>(&self) -> S {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return S::zero();
        }
        from_count::<S>(2 * self.tp) / from_count::<S>(denom)
    }

    pub fn recall<S: Real>(&self) -> S {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            return S::zero();
        }
        from_count::<S>(self.tp) / from_count::<S>(denom)
    }

    pub fn precision<S: Real>(&self) -> S {
        let denom = self.tp + self.fp;
        if denom == 0 {
            return S::zero();
        }
        from_count::<S>(self.tp) / from_count::<S>(denom)
    }
}

fn from_count<S: Real>(n: u64) -> S {
    <S as num_traits::FromPrimitive>::from_u64(n).expect("count fits scalar")
}

/// Pools TP/FP/FN per class over the union of pred and gold keys.
fn class_tallies(
    pred: &LabelMap,
    gold: &GoldLabels,
    vocabulary: &TechniqueVocabulary,
) -> Result<BTreeMap<String, Tally>> {
    let empty = LabelSet::new();
    let mut per_class: BTreeMap<String, Tally> =
        vocabulary.names().iter().map(|n| (n.clone(), Tally::default())).collect();

    let keys: BTreeSet<&ParagraphKey> = pred.keys().chain(gold.keys()).collect();
    for key in keys {
        let p = pred.get(key).unwrap_or(&empty);
        let g = gold.get(key).unwrap_or(&empty);
        vocabulary.check_labels(p)?;
        vocabulary.check_labels(g)?;
        for name in p {
            let tally = per_class.get_mut(name).expect("validated");
            if g.contains(name) {
                tally.tp += 1;
            } else {
                tally.fp += 1;
            }
        }
        for name in g {
            if !p.contains(name) {
                per_class.get_mut(name).expect("validated").fn_ += 1;
            }
        }
    }
    Ok(per_class)
}

fn micro_macro_from_tallies<S: Real>(per_class: &BTreeMap<String, Tally>) -> (Tally, S, S) {
    let mut global = Tally::default();
    let mut macro_sum = S::zero();
    let mut macro_classes = 0u64;
    for tally in per_class.values() {
        global.add(tally);
        if tally.total() > 0 {
            macro_sum = macro_sum + tally.f1::<S>();
            macro_classes += 1;
        }
    }
    let f1_macro = if macro_classes == 0 {
        S::zero()
    } else {
        macro_sum / from_count::<S>(macro_classes)
    };
    (global, global.f1::<S>(), f1_macro)
}

/// Micro-averaged F1 over all (paragraph, class) pairs.
///
/// Keys missing from either mapping count as empty sets on that side.
pub fn f1_micro<S: Real>(
    pred: &LabelMap,
    gold: &GoldLabels,
    vocabulary: &TechniqueVocabulary,
) -> Result<S> {
    let per_class = class_tallies(pred, gold, vocabulary)?;
    let (_, micro, _) = micro_macro_from_tallies::<S>(&per_class);
    Ok(micro)
}

/// Unweighted mean of per-class F1 over classes seen in gold or predictions.
pub fn f1_macro<S: Real>(
    pred: &LabelMap,
    gold: &GoldLabels,
    vocabulary: &TechniqueVocabulary,
) -> Result<S> {
    let per_class = class_tallies(pred, gold, vocabulary)?;
    let (_, _, macro_) = micro_macro_from_tallies::<S>(&per_class);
    Ok(macro_)
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint<S> {
    pub threshold: f64,
    pub f1_micro: S,
    pub f1_macro: S,
}

/// F1 as a function of the confidence threshold, plus the selected optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCurve<S> {
    pub points: Vec<CurvePoint<S>>,
    pub best_threshold: f64,
    pub best_f1_micro: S,
}

impl<S: Real> CalibrationCurve<S> {
    /// CSV with a `threshold,f1_micro,f1_macro` header and a final summary
    /// line `best,<threshold>,<f1_micro>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,f1_micro,f1_macro\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.f1_micro, p.f1_macro));
        }
        out.push_str(&format!("best,{},{}\n", self.best_threshold, self.best_f1_micro));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Micro F1 at one grid point, if present.
    pub fn f1_at(&self, threshold: f64) -> Option<S> {
        self.points
            .iter()
            .find(|p| (p.threshold - threshold).abs() < 1e-12)
            .map(|p| p.f1_micro)
    }
}

/// Sweeps the grid for a single probability table.
///
/// `best_threshold` is the largest grid point attaining the maximal micro F1.
pub fn calibrate_threshold<S: Real>(
    table: &ProbabilityTable<S>,
    gold: &GoldLabels,
    grid: &ThresholdGrid,
) -> Result<CalibrationCurve<S>> {
    calibrate_union(&[table], gold, grid)
}

/// Sweeps the grid for the label-union ensemble of several tables.
///
/// At each threshold every table is decoded separately and the predicted
/// sets are merged per key before scoring. With a single table this reduces
/// to plain calibration.
pub fn calibrate_union<S: Real>(
    tables: &[&ProbabilityTable<S>],
    gold: &GoldLabels,
    grid: &ThresholdGrid,
) -> Result<CalibrationCurve<S>> {
    grid.validate()?;
    if tables.is_empty() || tables.iter().any(|t| t.is_empty()) {
        return Err(Error::EmptyTable);
    }
    let vocabulary = &tables[0].vocabulary;
    for t in &tables[1..] {
        if t.vocabulary != *vocabulary {
            return Err(Error::VocabularyMismatch(
                "ensemble members use different vocabularies".to_string(),
            ));
        }
    }

    let mut points = Vec::new();
    let mut best_threshold = f64::NAN;
    let mut best_f1 = S::neg_infinity();
    for threshold in grid.points() {
        let mut pred = apply_threshold(tables[0], threshold)?;
        for table in &tables[1..] {
            let other = apply_threshold(table, threshold)?;
            pred = ensemble_union(&pred, &other, vocabulary)?;
        }
        let per_class = class_tallies(&pred, gold, vocabulary)?;
        let (_, micro, macro_) = micro_macro_from_tallies::<S>(&per_class);
        points.push(CurvePoint {
            threshold,
            f1_micro: micro,
            f1_macro: macro_,
        });
        // >= moves ties toward the larger threshold.
        if micro >= best_f1 {
            best_f1 = micro;
            best_threshold = threshold;
        }
    }
    Ok(CalibrationCurve {
        points,
        best_threshold,
        best_f1_micro: best_f1,
    })
}

/// Model, holdout predictions and holdout gold from a zero-shot run.
pub struct ZeroShotRun<S> {
    pub model: BaselineModel<S>,
    pub table: ProbabilityTable<S>,
    pub holdout_gold: GoldLabels,
}

/// Trains on the non-holdout languages and predicts on the holdout ones.
///
/// The holdout paragraphs and their gold labels never reach the trainer.
pub fn zero_shot_run<S: Real>(
    corpus: &Corpus,
    holdout: &BTreeSet<String>,
    settings: &TrainSettings<S>,
) -> Result<ZeroShotRun<S>> {
    if corpus.gold.is_none() {
        return Err(Error::MissingGold);
    }
    let (train_corpus, eval_corpus) = split_by_language(corpus, holdout)?;
    let model = baseline::train(&train_corpus, settings)?;
    let table = baseline::predict_probs(&model, &eval_corpus)?;
    let holdout_gold = eval_corpus.gold.clone().unwrap_or_default();
    Ok(ZeroShotRun {
        model,
        table,
        holdout_gold,
    })
}

/// Simulated zero-shot calibration: train without the holdout languages,
/// then sweep thresholds on the holdout predictions only.
pub fn calibrate_zero_shot<S: Real>(
    corpus: &Corpus,
    holdout: &BTreeSet<String>,
    settings: &TrainSettings<S>,
    grid: &ThresholdGrid,
) -> Result<CalibrationCurve<S>> {
    let run = zero_shot_run(corpus, holdout, settings)?;
    calibrate_threshold(&run.table, &run.holdout_gold, grid)
}

/// Merges two prediction mappings by per-key set union.
///
/// Keys present in only one mapping keep their set unchanged.
pub fn ensemble_union(
    a: &LabelMap,
    b: &LabelMap,
    vocabulary: &TechniqueVocabulary,
) -> Result<LabelMap> {
    let mut out = LabelMap::new();
    for (key, set) in a.iter().chain(b.iter()) {
        vocabulary.check_labels(set)?;
        out.entry(key.clone())
            .or_default()
            .extend(set.iter().cloned());
    }
    Ok(out)
}

/// Tallies plus micro/macro F1 for one slice of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreBlock<S> {
    pub tally: Tally,
    pub f1_micro: S,
    pub f1_macro: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScore<S> {
    pub tally: Tally,
    pub f1: S,
}

/// Full scoring breakdown: global, per class and per language.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport<S> {
    pub global: ScoreBlock<S>,
    pub per_class: BTreeMap<String, ClassScore<S>>,
    pub per_language: BTreeMap<String, ScoreBlock<S>>,
}

impl<S: Real + Serialize> ScoreReport<S> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores predictions against gold, with per-language breakdowns for keys
/// covered by `languages`.
pub fn score<S: Real>(
    pred: &LabelMap,
    gold: &GoldLabels,
    vocabulary: &TechniqueVocabulary,
    languages: &BTreeMap<ParagraphKey, String>,
) -> Result<ScoreReport<S>> {
    let per_class_tallies = class_tallies(pred, gold, vocabulary)?;
    let (global_tally, micro, macro_) = micro_macro_from_tallies::<S>(&per_class_tallies);

    let per_class = per_class_tallies
        .iter()
        .filter(|(_, t)| t.total() > 0)
        .map(|(name, tally)| {
            (
                name.clone(),
                ClassScore {
                    tally: *tally,
                    f1: tally.f1::<S>(),
                },
            )
        })
        .collect();

    let mut codes: BTreeSet<&String> = languages.values().collect();
    let keys: BTreeSet<&ParagraphKey> = pred.keys().chain(gold.keys()).collect();
    codes.retain(|code| keys.iter().any(|k| languages.get(k) == Some(code)));

    let mut per_language = BTreeMap::new();
    for code in codes {
        let restrict = |map: &LabelMap| -> LabelMap {
            map.iter()
                .filter(|(k, _)| languages.get(*k) == Some(code))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        let tallies = class_tallies(&restrict(pred), &restrict(gold), vocabulary)?;
        let (tally, f1_micro, f1_macro) = micro_macro_from_tallies::<S>(&tallies);
        per_language.insert(
            code.clone(),
            ScoreBlock {
                tally,
                f1_micro,
                f1_macro,
            },
        );
    }

    Ok(ScoreReport {
        global: ScoreBlock {
            tally: global_tally,
            f1_micro: micro,
            f1_macro: macro_,
        },
        per_class,
        per_language,
    })
}
