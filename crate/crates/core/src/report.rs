//! Diagnostic reports: the language × technique label-distribution matrix
//! and per-language calibration curves, both emitted as CSV for external
//! plotting.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, GoldLabels};
use crate::error::{Error, Result};
use crate::evaluate::{calibrate_threshold, ProbabilityTable, ThresholdGrid};
use crate::scalar::Real;

/// Gold label counts per (language, technique), with margins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionMatrix {
    pub languages: Vec<String>,
    pub techniques: Vec<String>,
    /// `cells[l][t]` = gold (paragraph, technique) pairs for language `l`.
    pub cells: Vec<Vec<u64>>,
    pub language_totals: Vec<u64>,
    pub technique_totals: Vec<u64>,
    pub total: u64,
}

impl DistributionMatrix {
    /// CSV: technique-name header, one row per language, margin row and
    /// column. Zero cells are kept; their existence is the finding.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language");
        for tech in &self.techniques {
            out.push(',');
            out.push_str(tech);
        }
        out.push_str(",total\n");
        for (l, lang) in self.languages.iter().enumerate() {
            out.push_str(lang);
            for value in &self.cells[l] {
                out.push_str(&format!(",{value}"));
            }
            out.push_str(&format!(",{}\n", self.language_totals[l]));
        }
        out.push_str("total");
        for value in &self.technique_totals {
            out.push_str(&format!(",{value}"));
        }
        out.push_str(&format!(",{}\n", self.total));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Counts gold labels per language and technique.
pub fn label_distribution(corpus: &Corpus) -> Result<DistributionMatrix> {
    let gold = corpus.gold.as_ref().ok_or(Error::MissingGold)?;
    let languages: Vec<String> = corpus.languages().into_iter().collect();
    let techniques: Vec<String> = corpus.vocabulary.names().to_vec();
    let lang_index: BTreeMap<&str, usize> =
        languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

    let mut cells = vec![vec![0u64; techniques.len()]; languages.len()];
    for paragraph in &corpus.paragraphs {
        let Some(set) = gold.get(&paragraph.key) else {
            continue;
        };
        let l = lang_index[paragraph.language.as_str()];
        for name in set {
            let t = corpus
                .vocabulary
                .index_of(name)
                .ok_or_else(|| Error::UnknownTechnique(name.clone()))?;
            cells[l][t] += 1;
        }
    }

    let language_totals: Vec<u64> = cells.iter().map(|row| row.iter().sum()).collect();
    let technique_totals: Vec<u64> = (0..techniques.len())
        .map(|t| cells.iter().map(|row| row[t]).sum())
        .collect();
    let total = language_totals.iter().sum();
    Ok(DistributionMatrix {
        languages,
        techniques,
        cells,
        language_totals,
        technique_totals,
        total,
    })
}

/// One row of the per-language calibration table.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow<S> {
    pub model: String,
    pub language: String,
    pub threshold: f64,
    pub f1_micro: S,
    pub f1_macro: S,
}

/// Per-language calibration sweeps for several models.
#[derive(Debug, Clone, PartialEq)]
pub struct PerLanguageCurves<S> {
    pub rows: Vec<CurveRow<S>>,
    /// (model, language) pairs with no rows in that model's table.
    pub skipped: Vec<(String, String)>,
}

impl<S: Real> PerLanguageCurves<S> {
    /// CSV `model,language,threshold,f1_micro,f1_macro`; a skipped pair
    /// becomes a row with empty numeric fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,language,threshold,f1_micro,f1_macro\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.model, row.language, row.threshold, row.f1_micro, row.f1_macro
            ));
        }
        for (model, language) in &self.skipped {
            out.push_str(&format!("{model},{language},,,\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Runs the calibration sweep once per (model, language).
///
/// The language set is the union over all tables; a model missing a
/// language entirely lands in `skipped`. Row order is deterministic:
/// model name, then language, then threshold.
pub fn per_language_curves<S: Real>(
    tables: &[(String, ProbabilityTable<S>)],
    gold: &GoldLabels,
    grid: &ThresholdGrid,
) -> Result<PerLanguageCurves<S>> {
    if let Some((_, first)) = tables.first() {
        for (name, table) in &tables[1..] {
            if table.vocabulary != first.vocabulary {
                return Err(Error::VocabularyMismatch(format!(
                    "table {name:?} uses a different vocabulary"
                )));
            }
        }
    }
    let mut languages = std::collections::BTreeSet::new();
    for (_, table) in tables {
        languages.extend(table.languages());
    }

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (name, table) in tables {
        for language in &languages {
            let restricted = table.restrict_to_language(language);
            if restricted.is_empty() {
                skipped.push((name.clone(), language.clone()));
                continue;
            }
            let keys = restricted.keys();
            let gold_slice: GoldLabels = gold
                .iter()
                .filter(|(k, _)| keys.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            let curve = calibrate_threshold(&restricted, &gold_slice, grid)?;
            for point in &curve.points {
                rows.push(CurveRow {
                    model: name.clone(),
                    language: language.clone(),
                    threshold: point.threshold,
                    f1_micro: point.f1_micro,
                    f1_macro: point.f1_macro,
                });
            }
        }
    }
    Ok(PerLanguageCurves { rows, skipped })
}
