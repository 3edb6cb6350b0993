use std::collections::BTreeSet;

use super::{
    candidate_spans, evidence_tokens, exact_match, span_text, Idf, LabelError, ReaderOracle, Result,
};
use crate::corpus::{Example, StopwordSet};
use crate::tensor::sigmoid;

const MAX_SPAN: usize = 5;
const WINDOW: usize = 3;
const FEATURES: usize = 5 + MAX_SPAN;
const STEPS: usize = 400;
const CHECKPOINTS: [usize; 4] = [50, 100, 200, 400];
const LEARNING_RATE: f64 = 0.5;

/// Logistic span scorer over overlap, proximity and length features,
/// trained by full-batch gradient descent on the gold spans of its
/// training folds.
#[derive(Debug, Clone)]
pub struct FeatureReader {
    name: String,
    stopwords: StopwordSet,
    fitted: Option<(Idf, [f64; FEATURES])>,
    seen: BTreeSet<String>,
}

impl Default for FeatureReader {
    fn default() -> Self {
        FeatureReader {
            name: "feature_reader".into(),
            stopwords: StopwordSet::english(),
            fitted: None,
            seen: BTreeSet::new(),
        }
    }
}

impl FeatureReader {
    /// Left-window overlap, right-window overlap, in-span overlap, inverse
    /// distance of overlap elsewhere in the sentence, bias, one-hot length.
    fn features(&self, idf: &Idf, sentence: &[String], question: &[String], span: (usize, usize)) -> [f64; FEATURES] {
        let (start, end) = span;
        let mut f = [0.0; FEATURES];
        for q in evidence_tokens(question, &self.stopwords) {
            let w = idf.weight(q);
            let mut nearest: Option<usize> = None;
            for (i, t) in sentence.iter().enumerate() {
                if t != q {
                    continue;
                }
                let d = if i < start {
                    start - i
                } else { i.saturating_sub(end) };
                if d == 0 {
                    f[2] += w;
                } else {
                    nearest = Some(nearest.map_or(d, |n: usize| n.min(d)));
                    if i < start && d <= WINDOW {
                        f[0] += w;
                    }
                    if i > end && d <= WINDOW {
                        f[1] += w;
                    }
                }
            }
            if let Some(d) = nearest {
                f[3] += w / d as f64;
            }
        }
        f[4] = 1.0;
        f[5 + end - start] = 1.0;
        f
    }

    fn best_span(&self, idf: &Idf, w: &[f64; FEATURES], sentence: &[String], question: &[String]) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for span in candidate_spans(sentence, MAX_SPAN) {
            let f = self.features(idf, sentence, question, span);
            let s: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((span, s));
            }
        }
        best.map(|(span, _)| span)
    }

    fn correct_on(&self, idf: &Idf, w: &[f64; FEATURES], examples: &[Example]) -> usize {
        examples
            .iter()
            .filter(|ex| {
                self.best_span(idf, w, &ex.sentence_tokens, &ex.question_tokens)
                    .is_some_and(|sp| exact_match(&span_text(&ex.sentence_tokens, sp), &ex.answer_text))
            })
            .count()
    }
}

impl ReaderOracle for FeatureReader {
    fn id(&self) -> &str {
        &self.name
    }

    fn fit(&mut self, train: &[Example], dev: &[Example]) -> Result<()> {
        if train.is_empty() {
            return Err(LabelError::Contract(format!("{} needs training examples", self.name)));
        }
        let idf = Idf::fit(train);
        let mut rows: Vec<([f64; FEATURES], f64)> = Vec::new();
        for ex in train {
            for span in candidate_spans(&ex.sentence_tokens, MAX_SPAN) {
                let y = if span == ex.answer_span { 1.0 } else { 0.0 };
                rows.push((self.features(&idf, &ex.sentence_tokens, &ex.question_tokens, span), y));
            }
        }
        let positives = rows.iter().filter(|r| r.1 > 0.0).count().max(1) as f64;
        let negatives = (rows.len() as f64 - positives).max(1.0);
        let mut w = [0.0; FEATURES];
        let mut best = (w, if dev.is_empty() { 0 } else { self.correct_on(&idf, &w, dev) });
        for step in 1..=STEPS {
            let mut grad = [0.0; FEATURES];
            for (x, y) in &rows {
                let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                // Classes are balanced so the rare gold span is not drowned out.
                let weight = if *y > 0.0 { 0.5 / positives } else { 0.5 / negatives };
                let err = (sigmoid(z) - y) * weight;
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += err * xi;
                }
            }
            for (wi, g) in w.iter_mut().zip(grad) {
                *wi -= LEARNING_RATE * g;
            }
            if CHECKPOINTS.contains(&step) {
                let correct = if dev.is_empty() { 0 } else { self.correct_on(&idf, &w, dev) };
                if dev.is_empty() || correct >= best.1 {
                    best = (w, correct);
                }
            }
        }
        self.fitted = Some((idf, best.0));
        self.seen = train.iter().chain(dev).map(|e| e.id.clone()).collect();
        Ok(())
    }

    fn predict(&self, sentence: &[String], question: &[String]) -> Result<String> {
        let (idf, w) = self
            .fitted
            .as_ref()
            .ok_or_else(|| LabelError::NotFitted(self.name.clone()))?;
        Ok(self
            .best_span(idf, w, sentence, question)
            .map(|sp| span_text(sentence, sp))
            .unwrap_or_default())
    }

    fn fitted_on(&self) -> &BTreeSet<String> {
        &self.seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, tokenize, Difficulty, HintProfile};

    #[test]
    fn learns_left_context_on_synthetic_data() {
        let c = generate_synthetic_corpus(160, 8, HintProfile::default()).unwrap();
        let mut r = FeatureReader::default();
        assert!(r.predict(&tokenize("x"), &tokenize("y")).is_err());
        r.fit(&c[..100], &c[100..120]).unwrap();
        let easy: Vec<&Example> = c[120..].iter().filter(|e| e.difficulty == Difficulty::Easy).collect();
        let hits = easy
            .iter()
            .filter(|e| exact_match(&r.predict(&e.sentence_tokens, &e.question_tokens).unwrap(), &e.answer_text))
            .count();
        assert!(hits as f64 >= 0.7 * easy.len() as f64, "{hits}/{}", easy.len());
        let again = r.predict(&c[121].sentence_tokens, &c[121].question_tokens).unwrap();
        assert_eq!(again, r.predict(&c[121].sentence_tokens, &c[121].question_tokens).unwrap());
    }
}
