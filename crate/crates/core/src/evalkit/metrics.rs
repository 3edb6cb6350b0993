use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Corpus BLEU at every order up to `max_n`, with the pieces it is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bleu {
    /// `scores[n - 1]` is BLEU-n.
    pub scores: Vec<f64>,
    /// Clipped n-gram precision per order.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    counts
}

fn check_corpus(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<()> {
    if candidates.is_empty() {
        return Err(EvalError::Contract("empty corpus".into()));
    }
    if candidates.len() != references.len() {
        return Err(EvalError::Contract(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    Ok(())
}

/// Corpus-level BLEU with one reference per candidate and no smoothing.
/// An order with zero matches makes that BLEU-n (and every higher one) 0.
pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<Bleu> {
    check_corpus(candidates, references)?;
    if max_n == 0 {
        return Err(EvalError::Contract("max_n must be at least 1".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    for (cand, reference) in candidates.iter().zip(references) {
        for n in 1..=max_n {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                matched[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    let brevity_penalty = if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp().min(1.0)
    };
    let precisions: Vec<f64> = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let mut scores = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for (i, &p) in precisions.iter().enumerate() {
        if p == 0.0 {
            zero = true;
        } else {
            log_sum += p.ln();
        }
        scores.push(if zero {
            0.0
        } else {
            brevity_penalty * (log_sum / (i + 1) as f64).exp()
        });
    }
    Ok(Bleu {
        scores,
        precisions,
        brevity_penalty,
        candidate_length: c,
        reference_length: r,
    })
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS F-measure (β = 1) of one pair. Two empty sequences match perfectly.
pub fn rouge_l_pair(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Macro average of per-pair ROUGE-L.
pub fn rouge_l(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    check_corpus(candidates, references)?;
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l_pair(c, r))
        .sum();
    Ok(sum / candidates.len() as f64)
}
