//! Data model and on-disk formats.
//!
//! Three line-oriented UTF-8 formats, all LF-terminated:
//!
//! * vocabulary file: one technique name per line;
//! * template file: `article_id<TAB>paragraph_id<TAB>text`;
//! * gold/submission file: `article_id<TAB>paragraph_id<TAB>name1,name2,...`
//!   where the third field may be empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered set of technique class names, with name → index lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechniqueVocabulary {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl TechniqueVocabulary {
    /// Builds a vocabulary from class names, keeping their order.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = TechniqueVocabulary {
            names: Vec::new(),
            index: BTreeMap::new(),
        };
        for name in names {
            let name = name.into();
            validate_technique_name(&name)?;
            if vocab.index.contains_key(&name) {
                return Err(Error::DuplicateTechniqueName(name));
            }
            vocab.index.insert(name.clone(), vocab.names.len());
            vocab.names.push(name);
        }
        if vocab.names.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Errors unless every name in `set` belongs to this vocabulary.
    pub fn check_labels(&self, set: &LabelSet) -> Result<()> {
        for name in set {
            if !self.contains(name) {
                return Err(Error::UnknownTechnique(name.clone()));
            }
        }
        Ok(())
    }

    /// Sorts technique names by their class index.
    pub fn sort_by_index<'a>(&self, set: &'a LabelSet) -> Vec<&'a str> {
        let mut names: Vec<&str> = set.iter().map(String::as_str).collect();
        names.sort_by_key(|n| self.index_of(n).unwrap_or(usize::MAX));
        names
    }
}

fn validate_technique_name(name: &str) -> Result<()> {
    let reason = if name.is_empty() {
        Some("empty")
    } else if name.contains('\t') {
        Some("contains a tab")
    } else if name.contains('\n') || name.contains('\r') {
        Some("contains a line break")
    } else if name.contains(',') {
        // Commas are the separator inside gold/submission files, so a name
        // containing one could never round-trip.
        Some("contains a comma")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(Error::InvalidTechniqueName {
            name: name.to_string(),
            reason: reason.to_string(),
        }),
        None => Ok(()),
    }
}

/// Identifier of a paragraph: article id plus paragraph number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParagraphKey {
    pub article_id: String,
    pub paragraph_id: u64,
}

impl ParagraphKey {
    pub fn new(article_id: impl Into<String>, paragraph_id: u64) -> Self {
        ParagraphKey {
            article_id: article_id.into(),
            paragraph_id,
        }
    }
}

impl fmt::Display for ParagraphKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.article_id, self.paragraph_id)
    }
}

/// One text sample tagged with its language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    pub key: ParagraphKey,
    pub language: String,
    pub text: String,
}

/// Set of technique names attached to one paragraph.
pub type LabelSet = BTreeSet<String>;
/// Paragraph key → label set. Used for gold labels and predictions alike.
pub type LabelMap = BTreeMap<ParagraphKey, LabelSet>;
/// Gold annotations; keys missing from the map count as empty sets.
pub type GoldLabels = LabelMap;

/// Paragraphs plus vocabulary, optionally with gold labels.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocabulary: TechniqueVocabulary,
    pub paragraphs: Vec<Paragraph>,
    pub gold: Option<GoldLabels>,
}

impl Corpus {
    pub fn new(vocabulary: TechniqueVocabulary, paragraphs: Vec<Paragraph>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &paragraphs {
            validate_language(&p.language)?;
            if !seen.insert(p.key.clone()) {
                return Err(Error::DuplicateKey(p.key.to_string()));
            }
        }
        Ok(Corpus {
            vocabulary,
            paragraphs,
            gold: None,
        })
    }

    /// Attaches gold labels, checking names and key membership.
    pub fn with_gold(mut self, gold: GoldLabels) -> Result<Self> {
        let keys: BTreeSet<&ParagraphKey> = self.paragraphs.iter().map(|p| &p.key).collect();
        for (key, set) in &gold {
            if !keys.contains(key) {
                return Err(Error::UnknownKey(key.to_string()));
            }
            self.vocabulary.check_labels(set)?;
        }
        self.gold = Some(gold);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    /// Set of languages present, sorted.
    pub fn languages(&self) -> BTreeSet<String> {
        self.paragraphs.iter().map(|p| p.language.clone()).collect()
    }

    /// Gold set for a key, empty when absent.
    pub fn gold_for(&self, key: &ParagraphKey) -> LabelSet {
        self.gold
            .as_ref()
            .and_then(|g| g.get(key).cloned())
            .unwrap_or_default()
    }

    /// Merges corpora that share a vocabulary; keys must stay unique.
    pub fn merge(parts: Vec<Corpus>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(Error::EmptyCorpus)?;
        let vocabulary = first.vocabulary.clone();
        let mut paragraphs = Vec::new();
        let mut gold = GoldLabels::new();
        let mut any_gold = false;
        for part in std::iter::once(first).chain(iter) {
            if part.vocabulary != vocabulary {
                return Err(Error::VocabularyMismatch(
                    "corpora built against different vocabularies".to_string(),
                ));
            }
            if let Some(g) = part.gold {
                any_gold = true;
                for (k, v) in g {
                    if gold.insert(k.clone(), v).is_some() {
                        return Err(Error::DuplicateKey(k.to_string()));
                    }
                }
            }
            paragraphs.extend(part.paragraphs);
        }
        let corpus = Corpus::new(vocabulary, paragraphs)?;
        if any_gold {
            corpus.with_gold(gold)
        } else {
            Ok(corpus)
        }
    }
}

fn validate_language(code: &str) -> Result<()> {
    let ok = !code.is_empty()
        && !code.contains(char::is_whitespace)
        && code == code.to_lowercase();
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLanguage(code.to_string()))
    }
}

/// Reads a vocabulary file: one name per line, order preserved.
pub fn load_vocabulary(path: &Path) -> Result<TechniqueVocabulary> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<&str> = content.lines().collect();
    TechniqueVocabulary::new(names)
}

/// Reads a template file, tagging every paragraph with `language`.
pub fn load_corpus(
    template_path: &Path,
    language: &str,
    vocabulary: &TechniqueVocabulary,
) -> Result<Corpus> {
    validate_language(language)?;
    let content = fs::read_to_string(template_path).map_err(|e| Error::io(template_path, e))?;
    let mut paragraphs = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        let mut fields = line.splitn(3, '\t');
        let (article_id, paragraph_id, text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(p), Some(t)) => (a, p, t),
            _ => {
                return Err(Error::malformed(
                    template_path,
                    lineno,
                    "expected 3 tab-separated fields",
                ))
            }
        };
        if article_id.is_empty() {
            return Err(Error::malformed(template_path, lineno, "empty article id"));
        }
        let paragraph_id: u64 = paragraph_id.parse().map_err(|_| {
            Error::malformed(
                template_path,
                lineno,
                format!("paragraph id {paragraph_id:?} is not a non-negative integer"),
            )
        })?;
        paragraphs.push(Paragraph {
            key: ParagraphKey::new(article_id, paragraph_id),
            language: language.to_string(),
            text: text.to_string(),
        });
    }
    Corpus::new(vocabulary.clone(), paragraphs)
}

/// Parses a gold/submission file into a label map without key checks.
///
/// Rejects malformed lines, unknown technique names and duplicate keys.
pub fn parse_label_file(path: &Path, vocabulary: &TechniqueVocabulary) -> Result<LabelMap> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = LabelMap::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        let mut fields = line.splitn(3, '\t');
        let (article_id, paragraph_id, labels) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(p), Some(l)) => (a, p, l),
            _ => {
                return Err(Error::malformed(
                    path,
                    lineno,
                    "expected 3 tab-separated fields",
                ))
            }
        };
        if article_id.is_empty() {
            return Err(Error::malformed(path, lineno, "empty article id"));
        }
        let paragraph_id: u64 = paragraph_id.parse().map_err(|_| {
            Error::malformed(
                path,
                lineno,
                format!("paragraph id {paragraph_id:?} is not a non-negative integer"),
            )
        })?;
        let key = ParagraphKey::new(article_id, paragraph_id);
        let mut set = LabelSet::new();
        if !labels.is_empty() {
            for name in labels.split(',') {
                if !vocabulary.contains(name) {
                    return Err(Error::UnknownTechnique(name.to_string()));
                }
                set.insert(name.to_string());
            }
        }
        if map.insert(key.clone(), set).is_some() {
            return Err(Error::DuplicateKey(key.to_string()));
        }
    }
    Ok(map)
}

/// Reads gold labels for `corpus`; every key in the file must exist there.
pub fn load_gold(path: &Path, corpus: &Corpus) -> Result<GoldLabels> {
    let map = parse_label_file(path, &corpus.vocabulary)?;
    let keys: BTreeSet<&ParagraphKey> = corpus.paragraphs.iter().map(|p| &p.key).collect();
    for key in map.keys() {
        if !keys.contains(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
    }
    Ok(map)
}

/// Serializes predictions in the gold-file format.
///
/// Keys are sorted by (article id, paragraph id); technique names within a
/// line follow vocabulary order, so emitting is a deterministic inverse of
/// [`parse_label_file`].
pub fn format_submission(predictions: &LabelMap, vocabulary: &TechniqueVocabulary) -> Result<String> {
    let mut out = String::new();
    for (key, set) in predictions {
        vocabulary.check_labels(set)?;
        let names = vocabulary.sort_by_index(set);
        out.push_str(&key.article_id);
        out.push('\t');
        out.push_str(&key.paragraph_id.to_string());
        out.push('\t');
        out.push_str(&names.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Writes predictions to `path` in the gold-file format.
pub fn emit_submission(
    predictions: &LabelMap,
    vocabulary: &TechniqueVocabulary,
    path: &Path,
) -> Result<()> {
    let text = format_submission(predictions, vocabulary)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Splits a corpus into (train, eval) by language.
///
/// `eval` receives exactly the paragraphs whose language is in `holdout`;
/// gold labels are partitioned along with their paragraphs. The holdout set
/// must be a proper subset of the corpus languages.
pub fn split_by_language(corpus: &Corpus, holdout: &BTreeSet<String>) -> Result<(Corpus, Corpus)> {
    let languages = corpus.languages();
    for lang in holdout {
        if !languages.contains(lang) {
            return Err(Error::HoldoutNotInCorpus(lang.clone()));
        }
    }
    if !languages.is_empty() && holdout.len() == languages.len() {
        return Err(Error::HoldoutCoversCorpus);
    }

    let mut train_paragraphs = Vec::new();
    let mut eval_paragraphs = Vec::new();
    for p in &corpus.paragraphs {
        if holdout.contains(&p.language) {
            eval_paragraphs.push(p.clone());
        } else {
            train_paragraphs.push(p.clone());
        }
    }

    let partition_gold = |paragraphs: &[Paragraph]| -> Option<GoldLabels> {
        corpus.gold.as_ref().map(|gold| {
            paragraphs
                .iter()
                .filter_map(|p| gold.get(&p.key).map(|set| (p.key.clone(), set.clone())))
                .collect()
        })
    };

    let train_gold = partition_gold(&train_paragraphs);
    let eval_gold = partition_gold(&eval_paragraphs);

    let mut train = Corpus::new(corpus.vocabulary.clone(), train_paragraphs)?;
    if let Some(g) = train_gold {
        train = train.with_gold(g)?;
    }
    let mut eval = Corpus::new(corpus.vocabulary.clone(), eval_paragraphs)?;
    if let Some(g) = eval_gold {
        eval = eval.with_gold(g)?;
    }
    Ok((train, eval))
}
