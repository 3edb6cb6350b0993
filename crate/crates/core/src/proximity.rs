//! Token distances to the answer span and corpus-level hint statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Difficulty, Example, StopwordSet};

/// Default clipping distance for position-embedding lookups.
pub const DEFAULT_MAX_DISTANCE: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProximityError {
    #[error("invalid answer span {span:?} for sentence of length {len}")]
    InvalidSpan { span: (usize, usize), len: usize },
    #[error("maximum distance must be at least 1")]
    ZeroMaxDistance,
}

/// Per-token distance to the nearest answer token, clipped at `max_distance`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionMap {
    pub distances: Vec<usize>,
    pub max_distance: usize,
}

/// Unclipped distance of token `i` to the inclusive span.
pub fn span_distance(i: usize, span: (usize, usize)) -> usize {
    if i < span.0 {
        span.0 - i
    } else { i.saturating_sub(span.1) }
}

pub fn relative_positions(
    m: usize,
    span: (usize, usize),
    max_distance: usize,
) -> Result<PositionMap, ProximityError> {
    if max_distance == 0 {
        return Err(ProximityError::ZeroMaxDistance);
    }
    if span.0 > span.1 || span.1 >= m {
        return Err(ProximityError::InvalidSpan { span, len: m });
    }
    Ok(PositionMap {
        distances: (0..m)
            .map(|i| span_distance(i, span).min(max_distance))
            .collect(),
        max_distance,
    })
}

/// Mean unclipped distance to the answer of the distinct non-stop question
/// tokens that occur in the sentence. Each token uses its occurrence nearest
/// to the answer. `None` when no question token qualifies.
pub fn avg_question_word_distance(example: &Example, stopwords: &StopwordSet) -> Option<f64> {
    let distinct: BTreeSet<&str> = example
        .question_tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !stopwords.is_stop(t))
        .collect();
    let dists: Vec<usize> = distinct
        .into_iter()
        .filter_map(|q| {
            example
                .sentence_tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.as_str() == q)
                .map(|(i, _)| span_distance(i, example.answer_span))
                .min()
        })
        .collect();
    mean(dists.iter().map(|&d| d as f64))
}

/// Mean unclipped distance of the non-stop, non-answer sentence tokens.
pub fn avg_sentence_word_distance(example: &Example, stopwords: &StopwordSet) -> Option<f64> {
    let span = example.answer_span;
    mean(
        example
            .sentence_tokens
            .iter()
            .enumerate()
            .filter(|(i, t)| span_distance(*i, span) > 0 && !stopwords.is_stop(t))
            .map(|(i, _)| span_distance(i, span) as f64),
    )
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityStats {
    pub avg_qword_dist_easy: Option<f64>,
    pub avg_qword_dist_hard: Option<f64>,
    pub avg_qword_dist_all: Option<f64>,
    pub avg_sentword_dist: Option<f64>,
    pub count_easy: usize,
    pub count_hard: usize,
    pub count_all: usize,
    pub count_sentence: usize,
}

/// Per-example averages, macro-averaged within each stratum.
pub fn corpus_proximity_stats(examples: &[Example], stopwords: &StopwordSet) -> ProximityStats {
    let mut easy = Vec::new();
    let mut hard = Vec::new();
    let mut all = Vec::new();
    let mut sent = Vec::new();
    for ex in examples {
        if let Some(d) = avg_question_word_distance(ex, stopwords) {
            all.push(d);
            match ex.difficulty {
                Difficulty::Easy => easy.push(d),
                Difficulty::Hard => hard.push(d),
                Difficulty::Unlabeled => {}
            }
        }
        if let Some(d) = avg_sentence_word_distance(ex, stopwords) {
            sent.push(d);
        }
    }
    ProximityStats {
        avg_qword_dist_easy: mean(easy.iter().copied()),
        avg_qword_dist_hard: mean(hard.iter().copied()),
        avg_qword_dist_all: mean(all.iter().copied()),
        avg_sentword_dist: mean(sent.iter().copied()),
        count_easy: easy.len(),
        count_hard: hard.len(),
        count_all: all.len(),
        count_sentence: sent.len(),
    }
}
