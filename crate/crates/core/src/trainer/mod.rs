//! Teacher-forced training with Adam, perplexity-based model selection and
//! checkpoint persistence.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta, FORMAT_VERSION};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, Vocab};
use crate::model::{
    decode_step, encode, init_decoder, ModelConfig, ModelError, ModelParams, QuestionGenerator, Session,
    SourceEncoding,
};
use crate::tensor::{Graph, NodeId, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            clip_norm: 5.0,
            batch_size: 8,
            max_epochs: 30,
            seed: 13,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("clip_norm", self.clip_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) || v == 0.0 {
                return Err(TrainError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Builds the summed teacher-forced loss of one example and returns it with
/// the number of target tokens (question tokens plus EOS).
fn build_loss(sess: &mut Session, example: &Example, vocab: &Vocab) -> Result<(NodeId, usize)> {
    let source = SourceEncoding::new(&example.sentence_tokens, vocab);
    let enc = encode(sess, &source, example.answer_span, example.difficulty)?;
    let mut state = init_decoder(sess, &enc, example.difficulty)?;
    let targets: Vec<usize> = example
        .question_tokens
        .iter()
        .map(|t| source.target_id(t, vocab))
        .chain([Vocab::EOS])
        .collect();
    let mut prev = Vocab::SOS;
    let mut losses = Vec::with_capacity(targets.len());
    for &target in &targets {
        let step = decode_step(sess, state, prev, &enc, &source)?;
        losses.push(sess.graph.nll_loss(step.dist, target).map_err(ModelError::from)?);
        state = step.state;
        prev = target;
    }
    let all = sess.graph.concat(&losses, 0).map_err(ModelError::from)?;
    let total = sess.graph.sum(all).map_err(ModelError::from)?;
    Ok((total, targets.len()))
}

/// Summed loss and target-token count, without gradients.
fn summed_loss(model: &QuestionGenerator, example: &Example) -> Result<(f64, usize)> {
    let mut graph = Graph::new();
    let mut sess = Session::new(&mut graph, &model.config, &model.params, false);
    let (loss, n) = build_loss(&mut sess, example, &model.vocab)?;
    Ok((sess.graph.value(loss)[0], n))
}

/// Mean per-token negative log-likelihood of the gold question, encoded with
/// the gold difficulty and decoded with gold previous tokens.
pub fn teacher_forced_loss(model: &QuestionGenerator, example: &Example) -> Result<f64> {
    let (loss, n) = summed_loss(model, example)?;
    Ok(loss / n as f64)
}

/// Per-token loss and its gradient for every parameter tensor, aligned with
/// `ModelParams::iter`.
pub fn loss_and_gradients(model: &QuestionGenerator, example: &Example) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut graph = Graph::new();
    let mut sess = Session::new(&mut graph, &model.config, &model.params, true);
    let (total, n) = build_loss(&mut sess, example, &model.vocab)?;
    let mean = sess.graph.scale(total, 1.0 / n as f64).map_err(ModelError::from)?;
    sess.graph.backward(mean).map_err(ModelError::from)?;
    Ok((sess.graph.value(mean)[0], sess.gradients()))
}

/// `exp` of the token-weighted mean teacher-forced loss over `examples`.
pub fn perplexity(model: &QuestionGenerator, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(TrainError::Contract("perplexity of an empty dataset".into()));
    }
    let mut loss = 0.0;
    let mut tokens = 0;
    for ex in examples {
        let (l, n) = summed_loss(model, ex)?;
        loss += l;
        tokens += n;
    }
    Ok((loss / tokens as f64).exp())
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= factor);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.adam_epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((_, tensor), g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (i, w) in tensor.values_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_perplexity: f64,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Trains from a seeded initialization and returns the checkpoint with the
/// lowest dev perplexity.
pub fn train(
    train_set: &[Example],
    dev_set: &[Example],
    vocab: &Vocab,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_callback(train_set, dev_set, vocab, model_config, train_config, |_| {})
}

/// [`train`] that reports every epoch as it finishes.
pub fn train_with_callback(
    train_set: &[Example],
    dev_set: &[Example],
    vocab: &Vocab,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    train_config.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(TrainError::Contract("training and dev sets must be non-empty".into()));
    }
    let params = ModelParams::init(model_config, train_config.seed)?;
    let mut model = QuestionGenerator::new(model_config.clone(), params, vocab.clone())?;
    let mut adam = Adam::new(&model.params, train_config);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    for epoch in 1..=train_config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(train_config.batch_size).enumerate() {
            let mut acc: Option<Vec<Vec<f64>>> = None;
            for &i in chunk {
                let (loss, grads) =
                    loss_and_gradients(&model, &train_set[i]).map_err(|e| diverged(e, epoch, batch + 1))?;
                if !loss.is_finite() {
                    return Err(TrainError::Divergence {
                        epoch,
                        batch: batch + 1,
                        loss,
                    });
                }
                epoch_loss += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(sum) => {
                        for (s, g) in sum.iter_mut().zip(&grads) {
                            s.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                        }
                    }
                }
            }
            let mut grads = acc.expect("chunks are non-empty");
            let scale = 1.0 / chunk.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            let norm = clip_gradients(&mut grads, train_config.clip_norm);
            if !norm.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: batch + 1,
                    loss: norm,
                });
            }
            adam.step(&mut model.params, &grads);
        }

        let batches = order.len().div_ceil(train_config.batch_size);
        let dev_ppl = perplexity(&model, dev_set).map_err(|e| diverged(e, epoch, batches))?;
        let improved = best.as_ref().is_none_or(|(b, _, _)| dev_ppl < *b);
        if improved {
            best = Some((dev_ppl, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            dev_perplexity: dev_ppl,
            best: improved,
        };
        on_epoch(&entry);
        log.push(entry);
        if since_best >= train_config.patience {
            break;
        }
    }
    let (dev_perplexity, epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: model_config.clone(),
            vocab: vocab.clone(),
            params,
            meta: CheckpointMeta {
                epoch,
                dev_perplexity,
                seed: train_config.seed,
            },
        },
        log,
    })
}

/// Non-finite values anywhere in the forward pass count as divergence.
fn diverged(e: TrainError, epoch: usize, batch: usize) -> TrainError {
    match e {
        TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. })) => TrainError::Divergence {
            epoch,
            batch,
            loss: f64::NAN,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, generate_synthetic_corpus, Difficulty, HintProfile};
    use crate::model::{ParamKind, PositionMode};

    const QUESTION: [&str; 4] = ["what", "symbol", "oxygen", "?"];

    fn toy_vocab() -> Vocab {
        let tokens = Vocab::RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(["what", "symbol", "oxygen", "?", "element", "o"].map(String::from))
            .collect();
        Vocab::from_tokens(tokens, 1).unwrap()
    }

    fn toy_example() -> Example {
        Example::from_raw(
            "toy",
            "oxygen element symbol o",
            22,
            "o",
            "what symbol oxygen?",
            Difficulty::Easy,
        )
        .unwrap()
    }

    /// Word embeddings are one-hot, the decoder memory holds a ±1 code of the
    /// previous token, and the output layer maps each previous token to the
    /// next gold token with a huge margin. The copy gate is pinned to 1.
    fn perfect_model() -> QuestionGenerator {
        let vocab = toy_vocab();
        let v = vocab.len();
        let config = ModelConfig {
            word_dim: v,
            position_dim: 2,
            difficulty_dim: 2,
            hidden: v / 2,
            position_mode: PositionMode::None,
            gdc: false,
            vocab_size: v,
            max_decode_len: 8,
            beam_size: 3,
            ..ModelConfig::default()
        };
        let d = config.decoder_dim();
        assert_eq!(d, v);
        let mut params = ModelParams::init(&config, 0).unwrap();
        for (_, t) in params.iter_mut() {
            t.values_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let emb = params.get_mut(ParamKind::WordEmb).unwrap().values_mut();
        for j in 0..v {
            emb[j * v + j] = 1.0;
        }
        let w = params.get_mut(ParamKind::DecW).unwrap().values_mut();
        for j in 0..v {
            w[j * 4 * d + 3 * d + j] = 100.0;
        }
        let b = params.get_mut(ParamKind::DecB).unwrap().values_mut();
        for k in 0..d {
            b[k] = 50.0;
            b[d + k] = -50.0;
            b[2 * d + k] = 50.0;
            b[3 * d + k] = -50.0;
        }
        let mut chain = vec![Vocab::SOS];
        chain.extend(QUESTION.iter().map(|t| vocab.id(t)));
        chain.push(Vocab::EOS);
        let out = params.get_mut(ParamKind::OutW).unwrap().values_mut();
        for pair in chain.windows(2) {
            out[pair[0] * v + pair[1]] = 1e4;
        }
        params.get_mut(ParamKind::GenB).unwrap().values_mut()[0] = 40.0;
        QuestionGenerator::new(config, params, vocab).unwrap()
    }

    #[test]
    fn perfect_model_has_zero_loss() {
        let model = perfect_model();
        let ex = toy_example();
        let loss = teacher_forced_loss(&model, &ex).unwrap();
        assert!(loss.abs() < 1e-9, "{loss}");
        assert!((perplexity(&model, &[ex.clone()]).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(model.generate(&ex, Difficulty::Easy).unwrap(), QUESTION);
    }

    #[test]
    fn uniform_model_has_log_vocab_loss() {
        let mut model = perfect_model();
        for kind in [ParamKind::OutW, ParamKind::OutB] {
            model.params.get_mut(kind).unwrap().values_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let ex = toy_example();
        let k = model.vocab.len() as f64;
        let loss = teacher_forced_loss(&model, &ex).unwrap();
        assert!((loss - k.ln()).abs() < 1e-10, "{loss}");
        assert!((perplexity(&model, &[ex]).unwrap() - k).abs() < 1e-9);
    }

    fn small_setup(n: usize) -> (Vec<Example>, Vocab, ModelConfig) {
        let corpus = generate_synthetic_corpus(n, 4, HintProfile::default()).unwrap();
        let vocab = build_vocab(&corpus, 1).unwrap();
        let config = ModelConfig {
            word_dim: 8,
            position_dim: 4,
            difficulty_dim: 3,
            hidden: 6,
            vocab_size: vocab.len(),
            max_decode_len: 8,
            ..ModelConfig::default()
        };
        (corpus, vocab, config)
    }

    #[test]
    fn loss_is_independent_of_evaluation_order() {
        let (corpus, vocab, config) = small_setup(6);
        let model = QuestionGenerator::new(config.clone(), ModelParams::init(&config, 1).unwrap(), vocab).unwrap();
        let forward: Vec<f64> = corpus.iter().map(|e| teacher_forced_loss(&model, e).unwrap()).collect();
        let mut backward: Vec<f64> = corpus.iter().rev().map(|e| teacher_forced_loss(&model, e).unwrap()).collect();
        backward.reverse();
        assert_eq!(forward, backward);
        let mut reversed = corpus.clone();
        reversed.reverse();
        assert_eq!(
            perplexity(&model, &corpus).unwrap().to_bits(),
            perplexity(&model, &reversed).unwrap().to_bits()
        );
    }

    #[test]
    fn perplexity_rises_when_a_worse_example_is_added() {
        let (corpus, vocab, config) = small_setup(8);
        let model = QuestionGenerator::new(config.clone(), ModelParams::init(&config, 2).unwrap(), vocab).unwrap();
        let mut losses: Vec<(f64, usize)> = corpus
            .iter()
            .enumerate()
            .map(|(i, e)| (teacher_forced_loss(&model, e).unwrap(), i))
            .collect();
        losses.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let worst = losses.pop().unwrap().1;
        let rest: Vec<Example> = losses.iter().map(|&(_, i)| corpus[i].clone()).collect();
        let mut more = rest.clone();
        more.push(corpus[worst].clone());
        assert!(perplexity(&model, &more).unwrap() > perplexity(&model, &rest).unwrap());
    }

    #[test]
    fn unlabeled_example_is_rejected_by_label_consuming_variant() {
        let (corpus, vocab, config) = small_setup(2);
        let model = QuestionGenerator::new(config.clone(), ModelParams::init(&config, 1).unwrap(), vocab).unwrap();
        let ex = corpus[0].with_difficulty(Difficulty::Unlabeled);
        assert!(matches!(
            teacher_forced_loss(&model, &ex),
            Err(TrainError::Model(ModelError::Contract(_)))
        ));
    }

    #[test]
    fn one_small_adam_step_lowers_the_loss() {
        let (corpus, vocab, config) = small_setup(3);
        let mut model = QuestionGenerator::new(config.clone(), ModelParams::init(&config, 5).unwrap(), vocab).unwrap();
        let tc = TrainConfig {
            learning_rate: 1e-4,
            ..TrainConfig::default()
        };
        let ex = &corpus[0];
        let (before, grads) = loss_and_gradients(&model, ex).unwrap();
        assert!((before - teacher_forced_loss(&model, ex).unwrap()).abs() < 1e-12);
        let mut adam = Adam::new(&model.params, &tc);
        adam.step(&mut model.params, &grads);
        let after = teacher_forced_loss(&model, ex).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut grads = vec![vec![3.0, 4.0], vec![12.0]];
        let norm = clip_gradients(&mut grads, 5.0);
        assert_eq!(norm, 13.0);
        assert!(global_norm(&grads) <= 5.0 + 1e-9);
        let mut small = vec![vec![0.3, 0.4]];
        clip_gradients(&mut small, 5.0);
        assert_eq!(small, vec![vec![0.3, 0.4]]);
    }

    #[test]
    fn training_is_deterministic_and_selects_the_best_epoch() {
        let (corpus, vocab, config) = small_setup(10);
        let tc = TrainConfig {
            max_epochs: 4,
            batch_size: 3,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let a = train(&corpus[..7], &corpus[7..], &vocab, &config, &tc).unwrap();
        let b = train(&corpus[..7], &corpus[7..], &vocab, &config, &tc).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
        let best = a.checkpoint.meta.dev_perplexity;
        assert!(a.log.iter().all(|e| best <= e.dev_perplexity));
        assert!(a.log[0].train_loss > a.log.last().unwrap().train_loss);
    }

    #[test]
    fn empty_dev_set_is_a_contract_error() {
        let (corpus, vocab, config) = small_setup(3);
        assert!(matches!(
            train(&corpus, &[], &vocab, &config, &TrainConfig::default()),
            Err(TrainError::Contract(_))
        ));
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&corpus, &corpus, &vocab, &config, &bad), Err(TrainError::Config(_))));
    }

    #[test]
    fn divergence_reports_its_location() {
        let (corpus, vocab, config) = small_setup(4);
        let tc = TrainConfig {
            learning_rate: f64::MAX,
            max_epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        match train(&corpus, &corpus, &vocab, &config, &tc) {
            Err(TrainError::Divergence { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
