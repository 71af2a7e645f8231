//! Implementations of the `ptd` subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ptd_core::baseline::{self, BaselineModel, TrainSettings};
use ptd_core::corpus::{self, Corpus, LabelMap, ParagraphKey};
use ptd_core::evaluate::{
    adjust_threshold, apply_threshold, calibrate_union, calibrate_zero_shot, ensemble_union,
    CalibrationCurve, ProbabilityTable,
};
use ptd_core::preprocess::PreprocessConfig;
use ptd_core::report::label_distribution;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub struct Ctx {
    pub quiet: bool,
    pub seed: Option<u64>,
}

impl Ctx {
    fn log(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }
}

/// Loads every configured language, attaching gold labels, into one corpus.
fn load_annotated_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    let vocabulary = corpus::load_vocabulary(&config.vocabulary)?;
    let mut parts = Vec::new();
    for (lang, gold_path) in config.annotated_languages()? {
        let part = corpus::load_corpus(&lang.template, &lang.code, &vocabulary)?;
        let gold = corpus::load_gold(gold_path, &part)?;
        parts.push(part.with_gold(gold)?);
    }
    Ok(Corpus::merge(parts)?)
}

fn train_settings(config: &RunConfig, ctx: &Ctx, preprocess: PreprocessConfig) -> TrainSettings<f64> {
    TrainSettings {
        featurizer: config.featurizer,
        preprocess,
        epochs: config.trainer.epochs,
        learning_rate: config.trainer.learning_rate,
        batch_size: config.trainer.batch_size,
        seed: ctx.seed.unwrap_or(config.seed),
    }
}

pub fn cmd_eda(config: &RunConfig, ctx: &Ctx, out: &Path) -> Result<(), CliError> {
    let corpus = load_annotated_corpus(config)?;
    let matrix = label_distribution(&corpus)?;
    matrix.write_csv(out)?;
    ctx.log(format!(
        "eda: {} languages x {} techniques, {} gold labels -> {}",
        matrix.languages.len(),
        matrix.techniques.len(),
        matrix.total,
        out.display()
    ));
    Ok(())
}

/// Parses the `--preprocess ws_punct,entities` strategy list.
pub fn parse_preprocess_flags(list: &str) -> Result<PreprocessConfig, CliError> {
    let mut config = PreprocessConfig::none();
    for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token {
            "ws_punct" => config.normalize_whitespace_punct = true,
            "entities" => config.replace_entities = true,
            other => {
                return Err(CliError::Config(format!(
                    "unknown preprocess strategy {other:?} (expected ws_punct or entities)"
                )))
            }
        }
    }
    Ok(config)
}

pub fn cmd_train(
    config: &RunConfig,
    ctx: &Ctx,
    preprocess: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let corpus = load_annotated_corpus(config)?;
    let preprocess = match preprocess {
        Some(list) => parse_preprocess_flags(list)?,
        None => config.preprocess,
    };
    let settings = train_settings(config, ctx, preprocess);
    ctx.log(format!(
        "train: {} paragraphs, {} classes, seed {}",
        corpus.len(),
        corpus.vocabulary.len(),
        settings.seed
    ));
    let model = baseline::train(&corpus, &settings)?;
    for (epoch, loss) in model.epoch_losses.iter().enumerate() {
        ctx.log(format!("train: epoch {} loss {loss}", epoch + 1));
    }
    model.save(out)?;
    ctx.log(format!("train: model -> {}", out.display()));
    Ok(())
}

pub fn cmd_predict(
    ctx: &Ctx,
    model_path: &Path,
    template: &Path,
    language: &str,
    vocabulary: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let model = BaselineModel::<f64>::load(model_path)?;
    if let Some(vocab_path) = vocabulary {
        let vocab = corpus::load_vocabulary(vocab_path)?;
        if vocab != model.vocabulary {
            return Err(CliError::Vocabulary(format!(
                "{} does not match the model's vocabulary",
                vocab_path.display()
            )));
        }
    }
    let corpus = corpus::load_corpus(template, language, &model.vocabulary)?;
    let table = baseline::predict_probs(&model, &corpus)?;
    table.write_jsonl(out)?;
    ctx.log(format!("predict: {} rows -> {}", table.len(), out.display()));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CalibrateMode {
    Default,
    ZeroShot,
}

#[derive(Serialize)]
struct CalibrationSummary {
    best_threshold: f64,
    best_f1_micro: f64,
    adjusted_threshold: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_calibrate(
    config: &RunConfig,
    ctx: &Ctx,
    mode: CalibrateMode,
    tables: &[PathBuf],
    gold: Option<&Path>,
    holdout: &[String],
    out_curve: &Path,
    out_summary: Option<&Path>,
) -> Result<(), CliError> {
    let curve: CalibrationCurve<f64> = match mode {
        CalibrateMode::Default => {
            if tables.is_empty() {
                return Err(CliError::Config("default mode needs at least one --table".into()));
            }
            let gold_path =
                gold.ok_or_else(|| CliError::Config("default mode needs --gold".into()))?;
            let vocabulary = corpus::load_vocabulary(&config.vocabulary)?;
            let loaded: Vec<ProbabilityTable<f64>> = tables
                .iter()
                .map(|p| ProbabilityTable::read_jsonl(p, &vocabulary))
                .collect::<Result<_, _>>()?;
            let gold_map = corpus::parse_label_file(gold_path, &vocabulary)?;
            let refs: Vec<&ProbabilityTable<f64>> = loaded.iter().collect();
            calibrate_union(&refs, &gold_map, &config.grid)?
        }
        CalibrateMode::ZeroShot => {
            if holdout.is_empty() {
                return Err(CliError::Config("zero-shot mode needs at least one --holdout".into()));
            }
            let corpus = load_annotated_corpus(config)?;
            let holdout = holdout.iter().cloned().collect();
            let settings = train_settings(config, ctx, config.preprocess);
            calibrate_zero_shot(&corpus, &holdout, &settings, &config.grid)?
        }
    };

    let adjusted = adjust_threshold(curve.best_threshold, config.threshold_adjust);
    let raw = curve.best_threshold + config.threshold_adjust;
    if !(0.0..=1.0).contains(&raw) {
        eprintln!("warning: adjusted threshold {raw} clamped to {adjusted}");
    }
    curve.write_csv(out_curve)?;
    ctx.log(format!(
        "calibrate: best threshold {} (micro F1 {}) -> {}",
        curve.best_threshold,
        curve.best_f1_micro,
        out_curve.display()
    ));

    let summary = CalibrationSummary {
        best_threshold: curve.best_threshold,
        best_f1_micro: curve.best_f1_micro,
        adjusted_threshold: adjusted,
    };
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Some(path) = out_summary {
        fs::write(path, &summary_json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    println!("{summary_json}");
    Ok(())
}

pub fn cmd_submit(
    config: &RunConfig,
    ctx: &Ctx,
    tables: &[(String, PathBuf)],
    out_dir: &Path,
) -> Result<(), CliError> {
    if tables.is_empty() {
        return Err(CliError::Config("submit needs at least one --table lang=path".into()));
    }
    let vocabulary = corpus::load_vocabulary(&config.vocabulary)?;
    let mut by_language: BTreeMap<&str, Vec<&PathBuf>> = BTreeMap::new();
    for (lang, path) in tables {
        by_language.entry(lang.as_str()).or_default().push(path);
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;

    for (lang, paths) in by_language {
        let threshold = if config.is_seen_language(lang) {
            config.seen_threshold
        } else {
            config.unseen_threshold
        };
        let mut merged: Option<LabelMap> = None;
        for path in paths {
            let table = ProbabilityTable::<f64>::read_jsonl(path, &vocabulary)?;
            if let Some(row) = table.rows.iter().find(|r| r.language != lang) {
                return Err(CliError::Config(format!(
                    "{}: row {} is tagged {:?}, not {lang:?}",
                    path.display(),
                    row.key,
                    row.language
                )));
            }
            let decoded = apply_threshold(&table, threshold)?;
            merged = Some(match merged {
                Some(prev) => ensemble_union(&prev, &decoded, &vocabulary)?,
                None => decoded,
            });
        }
        let predictions = merged.expect("at least one table per language");
        let out = out_dir.join(format!("{lang}.tsv"));
        corpus::emit_submission(&predictions, &vocabulary, &out)?;
        let kind = if config.is_seen_language(lang) { "seen" } else { "unseen" };
        ctx.log(format!(
            "submit: {lang} ({kind}, threshold {threshold}) -> {}",
            out.display()
        ));
    }
    Ok(())
}

pub fn cmd_score(
    ctx: &Ctx,
    pred: &Path,
    gold: &Path,
    vocabulary: &Path,
    templates: &[(String, PathBuf)],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let vocabulary = corpus::load_vocabulary(vocabulary)?;
    let pred_map = corpus::parse_label_file(pred, &vocabulary)?;
    let gold_map = corpus::parse_label_file(gold, &vocabulary)?;

    let mut languages: BTreeMap<ParagraphKey, String> = BTreeMap::new();
    for (lang, template) in templates {
        let part = corpus::load_corpus(template, lang, &vocabulary)?;
        for paragraph in &part.paragraphs {
            languages.insert(paragraph.key.clone(), lang.clone());
        }
    }

    let report = ptd_core::evaluate::score::<f64>(&pred_map, &gold_map, &vocabulary, &languages)?;
    let json = report.to_json();
    if let Some(path) = out {
        fs::write(path, &json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    ctx.log(format!(
        "score: micro F1 {} macro F1 {}",
        report.global.f1_micro, report.global.f1_macro
    ));
    println!("{json}");
    Ok(())
}
