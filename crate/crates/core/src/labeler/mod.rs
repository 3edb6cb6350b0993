//! Reader-based difficulty labeling: answer scoring, two trainable toy
//! readers and the k-fold protocol that keeps every reader away from the
//! examples it labels.

mod answer;
mod feature;
mod window;

pub use answer::{exact_match, normalize_answer, token_f1};
pub use feature::FeatureReader;
pub use window::WindowReader;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Difficulty, Example, StopwordSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("reader {0} used before fit")]
    NotFitted(String),
    #[error("reader {reader} was fit on {count} example(s) of the fold it labels")]
    Leak { reader: String, count: usize },
}

pub type Result<T> = std::result::Result<T, LabelError>;

/// A trainable extractive reader judged by exact match.
pub trait ReaderOracle {
    fn id(&self) -> &str;

    /// Replaces any previous fit.
    fn fit(&mut self, train: &[Example], dev: &[Example]) -> Result<()>;

    /// Predicted answer text for a tokenized sentence and question.
    fn predict(&self, sentence: &[String], question: &[String]) -> Result<String>;

    /// Ids of every example seen by the latest fit.
    fn fitted_on(&self) -> &BTreeSet<String>;
}

/// Candidate answer spans: every run of at most `max_len` tokens that
/// contains no punctuation-only token, ordered by start then length.
pub(crate) fn candidate_spans(sentence: &[String], max_len: usize) -> Vec<(usize, usize)> {
    let wordlike: Vec<bool> = sentence
        .iter()
        .map(|t| t.chars().any(char::is_alphanumeric))
        .collect();
    let mut out = Vec::new();
    for start in 0..sentence.len() {
        for end in start..sentence.len().min(start + max_len) {
            if !wordlike[end] {
                break;
            }
            out.push((start, end));
        }
    }
    out
}

pub(crate) fn span_text(sentence: &[String], span: (usize, usize)) -> String {
    sentence[span.0..=span.1].join(" ")
}

/// Distinct question tokens that can carry evidence.
pub(crate) fn evidence_tokens<'a>(question: &'a [String], stopwords: &StopwordSet) -> BTreeSet<&'a str> {
    question
        .iter()
        .map(String::as_str)
        .filter(|t| !stopwords.is_stop(t))
        .collect()
}

/// Smoothed inverse document frequency over training sentences.
#[derive(Debug, Clone, Default)]
pub(crate) struct Idf {
    docs: usize,
    df: BTreeMap<String, usize>,
}

impl Idf {
    pub fn fit(examples: &[Example]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for ex in examples {
            let distinct: BTreeSet<&String> = ex.sentence_tokens.iter().collect();
            for t in distinct {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        Idf {
            docs: examples.len(),
            df,
        }
    }

    /// `ln((N + 1) / (df + 1)) + 1`.
    pub fn weight(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelOutcome {
    Easy,
    Hard,
    Dropped,
}

impl LabelOutcome {
    pub fn difficulty(self) -> Difficulty {
        match self {
            LabelOutcome::Easy => Difficulty::Easy,
            LabelOutcome::Hard => Difficulty::Hard,
            LabelOutcome::Dropped => Difficulty::Unlabeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderVerdict {
    pub reader: String,
    pub prediction: String,
    pub exact_match: bool,
    /// Folds the reader was trained on when it produced this prediction.
    pub train_folds: Vec<usize>,
    pub dev_fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub fold: usize,
    pub verdicts: Vec<ReaderVerdict>,
    pub label: LabelOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub easy: usize,
    pub hard: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub k: usize,
    pub seed: u64,
    pub readers: Vec<String>,
    pub examples: Vec<LabeledExample>,
    pub counts: LabelCounts,
}

impl LabelReport {
    /// Easy, Hard and Dropped are disjoint, cover every example once, and
    /// agree with the aggregate counts.
    pub fn partition_holds(&self, input_ids: &[String]) -> bool {
        let mut seen = BTreeSet::new();
        let mut counts = LabelCounts::default();
        for ex in &self.examples {
            if !seen.insert(ex.id.as_str()) {
                return false;
            }
            match ex.label {
                LabelOutcome::Easy => counts.easy += 1,
                LabelOutcome::Hard => counts.hard += 1,
                LabelOutcome::Dropped => counts.dropped += 1,
            }
        }
        let input: BTreeSet<&str> = input_ids.iter().map(String::as_str).collect();
        counts == self.counts && seen == input && input.len() == input_ids.len()
    }

    /// Ids of examples whose own fold shows up among a reader's training or
    /// validation folds. Empty when the protocol was honored.
    pub fn leaked_examples(&self) -> Vec<String> {
        self.examples
            .iter()
            .filter(|ex| {
                ex.verdicts
                    .iter()
                    .any(|v| v.train_folds.contains(&ex.fold) || v.dev_fold == ex.fold)
            })
            .map(|ex| ex.id.clone())
            .collect()
    }

    pub fn label_of(&self, id: &str) -> Option<LabelOutcome> {
        self.examples.iter().find(|e| e.id == id).map(|e| e.label)
    }
}

/// Seeded fold assignment: shuffle the indices, then deal them round-robin.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Labels every example with readers that never saw its fold.
///
/// For labeled fold `f`, the validation fold is `(f + k - 1) % k` and the
/// remaining `k - 2` folds are training data. An example is Easy when every
/// reader answers it exactly, Hard when every reader misses, and Dropped
/// otherwise.
pub fn label_dataset(
    examples: &[Example],
    readers: &mut [&mut dyn ReaderOracle],
    k: usize,
    seed: u64,
) -> Result<LabelReport> {
    if k < 3 {
        return Err(LabelError::Contract(format!("k must be at least 3, got {k}")));
    }
    if examples.len() < k {
        return Err(LabelError::Contract(format!(
            "{} examples cannot fill {k} folds",
            examples.len()
        )));
    }
    if readers.len() < 2 {
        return Err(LabelError::Contract("labeling needs at least two readers".into()));
    }
    let ids: BTreeSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    if ids.len() != examples.len() {
        return Err(LabelError::Contract("example ids must be unique".into()));
    }

    let folds = assign_folds(examples.len(), k, seed);
    let members = |f: usize| -> Vec<Example> {
        examples
            .iter()
            .zip(&folds)
            .filter(|(_, &g)| g == f)
            .map(|(e, _)| e.clone())
            .collect()
    };
    let mut verdicts: Vec<Vec<ReaderVerdict>> = vec![Vec::new(); examples.len()];
    for f in 0..k {
        let dev_fold = (f + k - 1) % k;
        let train_folds: Vec<usize> = (0..k).filter(|&g| g != f && g != dev_fold).collect();
        let train: Vec<Example> = train_folds.iter().flat_map(|&g| members(g)).collect();
        let dev = members(dev_fold);
        let targets: Vec<usize> = (0..examples.len()).filter(|&i| folds[i] == f).collect();
        for reader in readers.iter_mut() {
            reader.fit(&train, &dev)?;
            let leaked = targets
                .iter()
                .filter(|&&i| reader.fitted_on().contains(&examples[i].id))
                .count();
            if leaked > 0 {
                return Err(LabelError::Leak {
                    reader: reader.id().to_string(),
                    count: leaked,
                });
            }
            for &i in &targets {
                let ex = &examples[i];
                let prediction = reader.predict(&ex.sentence_tokens, &ex.question_tokens)?;
                verdicts[i].push(ReaderVerdict {
                    reader: reader.id().to_string(),
                    exact_match: exact_match(&prediction, &ex.answer_text),
                    prediction,
                    train_folds: train_folds.clone(),
                    dev_fold,
                });
            }
        }
    }

    let mut counts = LabelCounts::default();
    let labeled = examples
        .iter()
        .zip(folds)
        .zip(verdicts)
        .map(|((ex, fold), verdicts)| {
            let label = if verdicts.iter().all(|v| v.exact_match) {
                counts.easy += 1;
                LabelOutcome::Easy
            } else if verdicts.iter().all(|v| !v.exact_match) {
                counts.hard += 1;
                LabelOutcome::Hard
            } else {
                counts.dropped += 1;
                LabelOutcome::Dropped
            };
            LabeledExample {
                id: ex.id.clone(),
                fold,
                verdicts,
                label,
            }
        })
        .collect();
    Ok(LabelReport {
        k,
        seed,
        readers: readers.iter().map(|r| r.id().to_string()).collect(),
        examples: labeled,
        counts,
    })
}

/// Copies `examples` with difficulties taken from `report`; Dropped examples
/// are kept and marked unlabeled.
pub fn apply_labels(examples: &[Example], report: &LabelReport) -> Result<Vec<Example>> {
    let by_id: BTreeMap<&str, LabelOutcome> = report
        .examples
        .iter()
        .map(|e| (e.id.as_str(), e.label))
        .collect();
    examples
        .iter()
        .map(|ex| {
            by_id
                .get(ex.id.as_str())
                .map(|l| ex.with_difficulty(l.difficulty()))
                .ok_or_else(|| LabelError::Contract(format!("example {} is missing from the report", ex.id)))
        })
        .collect()
}
