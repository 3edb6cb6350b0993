use std::cmp::Ordering;

use super::network::{decode_step, encode, init_decoder, DecoderState, EncoderOutput, Session, SourceEncoding};
use super::{ModelConfig, ModelError, ModelParams, Result};
use crate::corpus::{Difficulty, Example, Vocab};
use crate::tensor::{Graph, Tensor};

/// A partial decode.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Extended-vocabulary ids emitted after SOS (EOS included once finished).
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub hidden: Tensor,
    pub cell: Tensor,
    pub finished: bool,
}

/// Higher log-probability first; ties go to the lexicographically smaller id sequence.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Trained model plus the vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct QuestionGenerator {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub vocab: Vocab,
}

struct Prepared<'g, 'p> {
    sess: Session<'g, 'p>,
    enc: EncoderOutput,
    source: SourceEncoding,
    start: DecoderState,
}

impl QuestionGenerator {
    pub fn new(config: ModelConfig, params: ModelParams, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if config.vocab_size != vocab.len() {
            return Err(ModelError::Config(format!(
                "vocab_size {} does not match vocabulary of {} tokens",
                config.vocab_size,
                vocab.len()
            )));
        }
        Ok(QuestionGenerator {
            config,
            params,
            vocab,
        })
    }

    fn prepare<'g, 'p>(
        &'p self,
        graph: &'g mut Graph,
        example: &Example,
        difficulty: Difficulty,
    ) -> Result<Prepared<'g, 'p>> {
        let source = SourceEncoding::new(&example.sentence_tokens, &self.vocab);
        let mut sess = Session::new(graph, &self.config, &self.params, false);
        let enc = encode(&mut sess, &source, example.answer_span, difficulty)?;
        let start = init_decoder(&mut sess, &enc, difficulty)?;
        Ok(Prepared {
            sess,
            enc,
            source,
            start,
        })
    }

    /// Length-bounded beam search from SOS. Returns the best finished
    /// hypothesis, or the best unfinished one if none finished in time.
    pub fn beam_search(&self, example: &Example, difficulty: Difficulty, beam_size: usize) -> Result<Hypothesis> {
        if beam_size == 0 {
            return Err(ModelError::Contract("beam size must be at least 1".into()));
        }
        let mut graph = Graph::new();
        let Prepared {
            mut sess,
            enc,
            source,
            start,
        } = self.prepare(&mut graph, example, difficulty)?;
        let mut live = vec![Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            hidden: sess.graph.tensor(start.hidden).clone(),
            cell: sess.graph.tensor(start.cell).clone(),
            finished: false,
        }];
        let mut finished: Vec<Hypothesis> = Vec::new();

        for _ in 0..self.config.max_decode_len {
            let mut candidates: Vec<Hypothesis> = Vec::new();
            for hyp in &live {
                let state = DecoderState {
                    hidden: sess.graph.constant(hyp.hidden.clone()),
                    cell: sess.graph.constant(hyp.cell.clone()),
                };
                let prev = hyp.tokens.last().copied().unwrap_or(Vocab::SOS);
                let out = decode_step(&mut sess, state, prev, &enc, &source)?;
                let dist = sess.graph.value(out.dist);
                let mut options: Vec<(usize, f64)> = dist
                    .iter()
                    .enumerate()
                    .filter(|&(id, &p)| id != Vocab::PAD && id != Vocab::SOS && p > 0.0)
                    .map(|(id, &p)| (id, p))
                    .collect();
                options.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
                options.truncate(beam_size);
                let hidden = sess.graph.tensor(out.state.hidden).clone();
                let cell = sess.graph.tensor(out.state.cell).clone();
                for (id, p) in options {
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(id);
                    candidates.push(Hypothesis {
                        tokens,
                        log_prob: hyp.log_prob + p.ln(),
                        hidden: hidden.clone(),
                        cell: cell.clone(),
                        finished: id == Vocab::EOS,
                    });
                }
            }
            candidates.sort_by(rank);
            candidates.truncate(beam_size);
            live.clear();
            for c in candidates {
                if c.finished {
                    finished.push(c);
                } else {
                    live.push(c);
                }
            }
            finished.sort_by(rank);
            let best_done = finished.first().map(|h| h.log_prob);
            let best_live = live.first().map(|h| h.log_prob);
            match (best_done, best_live) {
                (_, None) => break,
                // Log-probabilities only fall, so no live hypothesis can overtake.
                (Some(d), Some(l)) if d >= l => break,
                _ => {}
            }
        }
        finished.sort_by(rank);
        live.sort_by(rank);
        finished
            .into_iter()
            .next()
            .or_else(|| live.into_iter().next())
            .ok_or_else(|| ModelError::Contract("beam search produced no hypothesis".into()))
    }

    /// Tokens of a hypothesis, without EOS.
    pub fn detokenize(&self, example: &Example, ids: &[usize]) -> Vec<String> {
        let source = SourceEncoding::new(&example.sentence_tokens, &self.vocab);
        ids.iter()
            .filter(|&&id| id != Vocab::EOS)
            .map(|&id| source.token(id, &self.vocab))
            .collect()
    }

    /// Question for `example` under the requested difficulty, which need not
    /// match the example's gold label.
    pub fn generate(&self, example: &Example, difficulty: Difficulty) -> Result<Vec<String>> {
        let best = self.beam_search(example, difficulty, self.config.beam_size)?;
        Ok(self.detokenize(example, &best.tokens))
    }
}

/// Argmax decoding with the same tie-break as beam search.
pub fn greedy_decode(model: &QuestionGenerator, example: &Example, difficulty: Difficulty) -> Result<Hypothesis> {
    let mut graph = Graph::new();
    let Prepared {
        mut sess,
        enc,
        source,
        start,
    } = model.prepare(&mut graph, example, difficulty)?;
    let mut state = start;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut finished = false;
    for _ in 0..model.config.max_decode_len {
        let prev = tokens.last().copied().unwrap_or(Vocab::SOS);
        let out = decode_step(&mut sess, state, prev, &enc, &source)?;
        let (id, p) = sess
            .graph
            .value(out.dist)
            .iter()
            .enumerate()
            .filter(|&(id, &p)| id != Vocab::PAD && id != Vocab::SOS && p > 0.0)
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (id, &p)| {
                if p > best.1 {
                    (id, p)
                } else {
                    best
                }
            });
        tokens.push(id);
        log_prob += p.ln();
        state = out.state;
        if id == Vocab::EOS {
            finished = true;
            break;
        }
    }
    Ok(Hypothesis {
        tokens,
        log_prob,
        hidden: sess.graph.tensor(state.hidden).clone(),
        cell: sess.graph.tensor(state.cell).clone(),
        finished,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, generate_synthetic_corpus, HintProfile};
    use crate::model::PositionMode;

    fn untrained(mode: PositionMode, gdc: bool, seed: u64) -> (QuestionGenerator, Vec<Example>) {
        let corpus = generate_synthetic_corpus(12, 2, HintProfile::default()).unwrap();
        let vocab = build_vocab(&corpus[..6], 1).unwrap();
        let config = ModelConfig {
            word_dim: 8,
            position_dim: 4,
            difficulty_dim: 3,
            hidden: 6,
            position_mode: mode,
            gdc,
            vocab_size: vocab.len(),
            max_decode_len: 6,
            beam_size: 3,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&config, seed).unwrap();
        (QuestionGenerator::new(config, params, vocab).unwrap(), corpus)
    }

    #[test]
    fn beam_of_one_is_greedy() {
        for seed in 0..4 {
            let (model, corpus) = untrained(PositionMode::Dlph, true, seed);
            for ex in &corpus {
                let b = model.beam_search(ex, ex.difficulty, 1).unwrap();
                let g = greedy_decode(&model, ex, ex.difficulty).unwrap();
                assert_eq!(b.tokens, g.tokens);
                assert!((b.log_prob - g.log_prob).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn label_free_variant_ignores_label() {
        let (model, corpus) = untrained(PositionMode::Qwph, false, 7);
        for ex in &corpus {
            let e = model.beam_search(ex, Difficulty::Easy, 3).unwrap();
            let h = model.beam_search(ex, Difficulty::Hard, 3).unwrap();
            assert_eq!(e.tokens, h.tokens);
            assert_eq!(e.log_prob.to_bits(), h.log_prob.to_bits());
        }
    }

    #[test]
    fn generation_is_bounded_and_deterministic() {
        let (model, corpus) = untrained(PositionMode::Dlph, true, 3);
        for ex in &corpus {
            let a = model.beam_search(ex, Difficulty::Hard, 3).unwrap();
            assert!(a.tokens.len() <= model.config.max_decode_len);
            assert!(a.log_prob <= 0.0);
            assert_eq!(a, model.beam_search(ex, Difficulty::Hard, 3).unwrap());
        }
        assert!(model.generate(&corpus[0], Difficulty::Unlabeled).is_err());
    }
}
