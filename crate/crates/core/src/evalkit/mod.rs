//! Question-quality metrics and the difficulty-control evaluations built on
//! reader accuracy over generated questions.

mod metrics;

pub use metrics::{corpus_bleu, rouge_l, rouge_l_pair, Bleu};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Difficulty, Example};
use crate::labeler::{exact_match, token_f1, LabelError, ReaderOracle};
use crate::model::{ModelError, QuestionGenerator};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Which difficulty label to condition generation on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// The example's own label.
    Gold,
    /// The opposite of the example's label.
    Reversed,
    Easy,
    Hard,
}

impl LabelMode {
    pub fn parse(s: &str) -> Option<LabelMode> {
        match s {
            "gold" => Some(LabelMode::Gold),
            "reversed" => Some(LabelMode::Reversed),
            "easy" => Some(LabelMode::Easy),
            "hard" => Some(LabelMode::Hard),
            _ => None,
        }
    }

    /// Label to feed for `example`; gold and reversed need a labeled example.
    pub fn resolve(self, example: &Example) -> Result<Difficulty> {
        let d = match self {
            LabelMode::Easy => return Ok(Difficulty::Easy),
            LabelMode::Hard => return Ok(Difficulty::Hard),
            LabelMode::Gold => example.difficulty,
            LabelMode::Reversed => example.difficulty.reversed(),
        };
        if d.is_labeled() {
            Ok(d)
        } else {
            Err(EvalError::Contract(format!(
                "example {} has no difficulty label to use or reverse",
                example.id
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub label_used: Difficulty,
    pub question: Vec<String>,
    pub gold_question: Vec<String>,
    pub answer_text: String,
}

/// One generated question per example, conditioned per `mode`.
pub fn generate_records(model: &QuestionGenerator, examples: &[Example], mode: LabelMode) -> Result<Vec<GenerationRecord>> {
    examples
        .iter()
        .map(|ex| {
            let label = mode.resolve(ex)?;
            Ok(GenerationRecord {
                id: ex.id.clone(),
                label_used: label,
                question: model.generate(ex, label)?,
                gold_question: ex.question_tokens.clone(),
                answer_text: ex.answer_text.clone(),
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct GenerationLine {
    id: String,
    label_used: Option<String>,
    question: String,
}

/// Writes `{id, label_used, question}` lines, the question as space-joined tokens.
pub fn write_generations(records: &[GenerationRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        let line = GenerationLine {
            id: r.id.clone(),
            label_used: r.label_used.is_labeled().then(|| r.label_used.as_str().to_string()),
            question: r.question.join(" "),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads generation lines and joins them with their examples by id.
pub fn read_generations(reader: impl BufRead, examples: &[Example]) -> Result<Vec<GenerationRecord>> {
    let by_id: BTreeMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| EvalError::Parse { line: i + 1, message };
        let g: GenerationLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let label_used = match g.label_used.as_deref() {
            Some("easy") => Difficulty::Easy,
            Some("hard") => Difficulty::Hard,
            None => Difficulty::Unlabeled,
            Some(other) => return Err(parse(format!("unknown label {other:?}"))),
        };
        let ex = by_id
            .get(g.id.as_str())
            .ok_or_else(|| parse(format!("id {} is not in the dataset", g.id)))?;
        out.push(GenerationRecord {
            id: g.id,
            label_used,
            question: tokenize(&g.question),
            gold_question: ex.question_tokens.clone(),
            answer_text: ex.answer_text.clone(),
        });
    }
    Ok(out)
}

/// Share of answer-token instances that reappear in their own generated
/// question. Stopwords are not filtered.
pub fn answer_occurrence_rate(records: &[GenerationRecord]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in records {
        let question: BTreeSet<&str> = r.question.iter().map(String::as_str).collect();
        for a in tokenize(&r.answer_text) {
            total += 1;
            hits += usize::from(question.contains(a.as_str()));
        }
    }
    if total == 0 {
        return Err(EvalError::Contract("no answer tokens to measure".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Reader accuracy on one difficulty stratum, on a 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumScore {
    pub exact_match: f64,
    pub f1: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderScores {
    pub reader: String,
    pub easy: StratumScore,
    pub hard: StratumScore,
}

fn audit_readers(readers: &[&dyn ReaderOracle], examples: &[Example]) -> Result<()> {
    for reader in readers {
        let leaked = examples
            .iter()
            .filter(|e| reader.fitted_on().contains(&e.id))
            .count();
        if leaked > 0 {
            return Err(LabelError::Leak {
                reader: reader.id().to_string(),
                count: leaked,
            }
            .into());
        }
    }
    Ok(())
}

/// Runs each reader on (sentence, generated question) against the gold
/// answer, split by the examples' gold difficulty.
pub fn score_generations(
    examples: &[Example],
    records: &[GenerationRecord],
    readers: &[&dyn ReaderOracle],
) -> Result<Vec<ReaderScores>> {
    audit_readers(readers, examples)?;
    let by_id: BTreeMap<&str, &GenerationRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut rows = Vec::with_capacity(examples.len());
    for ex in examples {
        if !ex.difficulty.is_labeled() {
            return Err(EvalError::Contract(format!("test example {} is unlabeled", ex.id)));
        }
        let rec = by_id
            .get(ex.id.as_str())
            .ok_or_else(|| EvalError::Contract(format!("no generation for example {}", ex.id)))?;
        rows.push((ex, *rec));
    }
    readers
        .iter()
        .map(|reader| {
            let mut sums = [(0.0, 0.0, 0usize); 2];
            for (ex, rec) in &rows {
                let pred = reader.predict(&ex.sentence_tokens, &rec.question)?;
                let slot = &mut sums[ex.difficulty.index().expect("checked above")];
                slot.0 += if exact_match(&pred, &ex.answer_text) { 1.0 } else { 0.0 };
                slot.1 += token_f1(&pred, &ex.answer_text);
                slot.2 += 1;
            }
            let score = |(em, f1, n): (f64, f64, usize)| StratumScore {
                exact_match: if n == 0 { 0.0 } else { 100.0 * em / n as f64 },
                f1: if n == 0 { 0.0 } else { 100.0 * f1 / n as f64 },
                count: n,
            };
            Ok(ReaderScores {
                reader: reader.id().to_string(),
                easy: score(sums[0]),
                hard: score(sums[1]),
            })
        })
        .collect()
}

/// Reader scores on questions generated with each example's true label.
pub fn difficulty_eval(
    model: &QuestionGenerator,
    test_set: &[Example],
    readers: &[&dyn ReaderOracle],
) -> Result<Vec<ReaderScores>> {
    audit_readers(readers, test_set)?;
    let records = generate_records(model, test_set, LabelMode::Gold)?;
    score_generations(test_set, &records, readers)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumGap {
    pub true_label: StratumScore,
    pub reversed_label: StratumScore,
    pub em_gap: f64,
    pub f1_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderGap {
    pub reader: String,
    pub easy: StratumGap,
    pub hard: StratumGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub readers: Vec<ReaderGap>,
}

/// Control gaps from two score sets. Easy gap = true − reversed; hard gap =
/// reversed − true, so positive values mean the label steered difficulty
/// the right way on both strata. Swapping the arguments negates every gap.
pub fn gap_report(true_scores: &[ReaderScores], reversed_scores: &[ReaderScores]) -> Result<GapReport> {
    if true_scores.len() != reversed_scores.len() {
        return Err(EvalError::Contract("score sets cover different readers".into()));
    }
    let readers = true_scores
        .iter()
        .zip(reversed_scores)
        .map(|(t, r)| {
            if t.reader != r.reader {
                return Err(EvalError::Contract(format!(
                    "reader {} paired with {}",
                    t.reader, r.reader
                )));
            }
            Ok(ReaderGap {
                reader: t.reader.clone(),
                easy: StratumGap {
                    true_label: t.easy,
                    reversed_label: r.easy,
                    em_gap: t.easy.exact_match - r.easy.exact_match,
                    f1_gap: t.easy.f1 - r.easy.f1,
                },
                hard: StratumGap {
                    true_label: t.hard,
                    reversed_label: r.hard,
                    em_gap: r.hard.exact_match - t.hard.exact_match,
                    f1_gap: r.hard.f1 - t.hard.f1,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport { readers })
}

/// Generates with true and reversed labels and compares reader accuracy.
pub fn reversed_label_gap(
    model: &QuestionGenerator,
    test_set: &[Example],
    readers: &[&dyn ReaderOracle],
) -> Result<GapReport> {
    audit_readers(readers, test_set)?;
    let truth = generate_records(model, test_set, LabelMode::Gold)?;
    let reversed = generate_records(model, test_set, LabelMode::Reversed)?;
    gap_report(
        &score_generations(test_set, &truth, readers)?,
        &score_generations(test_set, &reversed, readers)?,
    )
}
