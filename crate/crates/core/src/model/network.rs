use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, ModelParams, ParamKind, PositionMode, Result};
use crate::corpus::{Difficulty, Vocab};
use crate::proximity::relative_positions;
use crate::tensor::{grad_check, Graph, NodeId, Tensor};

/// Binds model parameters into a graph on first use.
pub struct Session<'g, 'p> {
    pub graph: &'g mut Graph,
    pub config: &'p ModelConfig,
    params: &'p ModelParams,
    bound: [Option<NodeId>; ParamKind::COUNT],
    trainable: bool,
}

impl<'g, 'p> Session<'g, 'p> {
    pub fn new(
        graph: &'g mut Graph,
        config: &'p ModelConfig,
        params: &'p ModelParams,
        trainable: bool,
    ) -> Self {
        Session {
            graph,
            config,
            params,
            bound: [None; ParamKind::COUNT],
            trainable,
        }
    }

    /// Uses an existing node in place of the stored tensor for `kind`.
    pub fn bind(&mut self, kind: ParamKind, node: NodeId) {
        self.bound[kind.slot()] = Some(node);
    }

    pub fn param(&mut self, kind: ParamKind) -> Result<NodeId> {
        if let Some(id) = self.bound[kind.slot()] {
            return Ok(id);
        }
        let tensor = self.params.get(kind).ok_or_else(|| {
            ModelError::Contract(format!("parameter {} is not part of this model", kind.name()))
        })?;
        let id = if self.trainable {
            self.graph.param(tensor.clone())
        } else {
            self.graph.constant(tensor.clone())
        };
        self.bound[kind.slot()] = Some(id);
        Ok(id)
    }

    /// Gradients for every parameter (zeros where it was not reached),
    /// aligned with `ModelParams::iter` order. Call after `graph.backward`.
    pub fn gradients(&self) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .map(|(kind, t)| {
                self.bound[kind.slot()]
                    .and_then(|id| self.graph.grad(id))
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect()
    }
}

/// Source tokens mapped into the fixed vocabulary and the per-sentence
/// extended vocabulary used by the copy distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceEncoding {
    /// Fixed-vocabulary ids; out-of-vocabulary tokens are UNK.
    pub ids: Vec<usize>,
    /// Extended ids; the k-th distinct OOV token gets `vocab_len + k`.
    pub ext_ids: Vec<usize>,
    pub oov: Vec<String>,
    pub vocab_len: usize,
}

impl SourceEncoding {
    pub fn new(tokens: &[String], vocab: &Vocab) -> Self {
        let mut oov: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(tokens.len());
        let mut ext_ids = Vec::with_capacity(tokens.len());
        for t in tokens {
            match vocab.get(t) {
                Some(id) => {
                    ids.push(id);
                    ext_ids.push(id);
                }
                None => {
                    let k = oov.iter().position(|o| o == t).unwrap_or_else(|| {
                        oov.push(t.clone());
                        oov.len() - 1
                    });
                    ids.push(Vocab::UNK);
                    ext_ids.push(vocab.len() + k);
                }
            }
        }
        SourceEncoding {
            ids,
            ext_ids,
            oov,
            vocab_len: vocab.len(),
        }
    }

    pub fn extended_size(&self) -> usize {
        self.vocab_len + self.oov.len()
    }

    /// Target id of a gold token: vocabulary id, else its source-copy id, else UNK.
    pub fn target_id(&self, token: &str, vocab: &Vocab) -> usize {
        vocab
            .get(token)
            .or_else(|| {
                self.oov
                    .iter()
                    .position(|o| o == token)
                    .map(|k| self.vocab_len + k)
            })
            .unwrap_or(Vocab::UNK)
    }

    pub fn token(&self, id: usize, vocab: &Vocab) -> String {
        match vocab.token(id) {
            Some(t) => t.to_string(),
            None => self
                .oov
                .get(id - self.vocab_len)
                .cloned()
                .unwrap_or_else(|| Vocab::RESERVED[Vocab::UNK].to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    /// `[m, 2H]` contextual states.
    pub states: NodeId,
    /// `[2H]`: forward final state concatenated with backward final state.
    pub final_state: NodeId,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub state: DecoderState,
    /// Distribution over the extended vocabulary.
    pub dist: NodeId,
    pub attention: NodeId,
    pub gate: NodeId,
}

fn require_label(difficulty: Difficulty, what: &str) -> Result<usize> {
    difficulty.index().ok_or_else(|| {
        ModelError::Contract(format!("{what} needs an easy or hard difficulty label"))
    })
}

/// One step of a gated recurrent cell with input, forget and output gates.
fn lstm_cell(
    g: &mut Graph,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    w: NodeId,
    b: NodeId,
    size: usize,
) -> Result<(NodeId, NodeId)> {
    let xh = g.concat(&[x, h], 0)?;
    let z = g.matmul(xh, w)?;
    let z = g.add(z, b)?;
    let zi = g.slice(z, 0, size)?;
    let zf = g.slice(z, size, size)?;
    let zo = g.slice(z, 2 * size, size)?;
    let zg = g.slice(z, 3 * size, size)?;
    let i = g.sigmoid(zi)?;
    let f = g.sigmoid(zf)?;
    let o = g.sigmoid(zo)?;
    let cand = g.tanh(zg)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_new = g.add(keep, write)?;
    let tc = g.tanh(c_new)?;
    let h_new = g.mul(o, tc)?;
    Ok((h_new, c_new))
}

pub fn encode(
    sess: &mut Session,
    source: &SourceEncoding,
    answer_span: (usize, usize),
    difficulty: Difficulty,
) -> Result<EncoderOutput> {
    let cfg = sess.config;
    let m = source.ids.len();
    if m == 0 {
        return Err(ModelError::Contract("cannot encode an empty sentence".into()));
    }
    let positions = relative_positions(m, answer_span, cfg.max_distance)
        .map_err(|e| ModelError::Contract(e.to_string()))?;
    let table = sess.param(ParamKind::WordEmb)?;
    let words = sess.graph.embedding_lookup(table, &source.ids)?;
    let inputs = match cfg.position_mode {
        PositionMode::None => words,
        mode => {
            let (kind, rows): (ParamKind, Vec<usize>) = match mode {
                PositionMode::AnswerIndicator => (
                    ParamKind::AnswerIndicator,
                    positions.distances.iter().map(|&d| usize::from(d == 0)).collect(),
                ),
                PositionMode::Qwph => (ParamKind::PosShared, positions.distances.clone()),
                _ => {
                    let kind = match require_label(difficulty, "DLPH position lookup")? {
                        0 => ParamKind::PosEasy,
                        _ => ParamKind::PosHard,
                    };
                    (kind, positions.distances.clone())
                }
            };
            let ptable = sess.param(kind)?;
            let pos = sess.graph.embedding_lookup(ptable, &rows)?;
            sess.graph.concat(&[words, pos], 1)?
        }
    };
    let din = cfg.encoder_input_dim();
    let h = cfg.hidden;
    let xs = (0..m)
        .map(|i| sess.graph.slice(inputs, i * din, din))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let fw = sess.param(ParamKind::EncFwdW)?;
    let fb = sess.param(ParamKind::EncFwdB)?;
    let bw = sess.param(ParamKind::EncBwdW)?;
    let bb = sess.param(ParamKind::EncBwdB)?;
    let zero = sess.graph.constant(Tensor::zeros(vec![h]));

    let mut forward = Vec::with_capacity(m);
    let (mut hs, mut cs) = (zero, zero);
    for &x in &xs {
        (hs, cs) = lstm_cell(sess.graph, x, hs, cs, fw, fb, h)?;
        forward.push(hs);
    }
    let mut backward = vec![zero; m];
    let (mut hs, mut cs) = (zero, zero);
    for i in (0..m).rev() {
        (hs, cs) = lstm_cell(sess.graph, xs[i], hs, cs, bw, bb, h)?;
        backward[i] = hs;
    }
    let mut per_token = Vec::with_capacity(2 * m);
    for i in 0..m {
        per_token.push(forward[i]);
        per_token.push(backward[i]);
    }
    let flat = sess.graph.concat(&per_token, 0)?;
    let states = sess.graph.reshape(flat, vec![m, 2 * h])?;
    let final_state = sess.graph.concat(&[forward[m - 1], backward[0]], 0)?;
    Ok(EncoderOutput {
        states,
        final_state,
        len: m,
    })
}

/// `u_0 = [h_m; d]` under GDC, `u_0 = h_m` otherwise. The memory cell starts at zero.
pub fn init_decoder(
    sess: &mut Session,
    enc: &EncoderOutput,
    difficulty: Difficulty,
) -> Result<DecoderState> {
    let hidden = if sess.config.gdc {
        let row = require_label(difficulty, "global difficulty control")?;
        let table = sess.param(ParamKind::DifficultyEmb)?;
        let d = sess.graph.embedding_lookup(table, &[row])?;
        let d = sess.graph.reshape(d, vec![sess.config.difficulty_dim])?;
        sess.graph.concat(&[enc.final_state, d], 0)?
    } else {
        enc.final_state
    };
    let cell = sess
        .graph
        .constant(Tensor::zeros(vec![sess.config.decoder_dim()]));
    Ok(DecoderState { hidden, cell })
}

/// Bilinear attention: `score_i = uᵀ W_a h_i`, `α = softmax(score)`, `c = Σ α_i h_i`.
pub fn attention(sess: &mut Session, query: NodeId, enc: &EncoderOutput) -> Result<(NodeId, NodeId)> {
    let wa = sess.param(ParamKind::AttnW)?;
    let proj = sess.graph.matmul(query, wa)?;
    let scores = sess.graph.matmul(enc.states, proj)?;
    let alpha = sess.graph.softmax(scores)?;
    let context = sess.graph.matmul(alpha, enc.states)?;
    Ok((context, alpha))
}

pub fn decode_step(
    sess: &mut Session,
    state: DecoderState,
    prev_token: usize,
    enc: &EncoderOutput,
    source: &SourceEncoding,
) -> Result<StepOutput> {
    decode_step_with_gate(sess, state, prev_token, enc, source, None)
}

/// [`decode_step`] with the generate/copy switch optionally pinned to a constant.
pub fn decode_step_with_gate(
    sess: &mut Session,
    state: DecoderState,
    prev_token: usize,
    enc: &EncoderOutput,
    source: &SourceEncoding,
    gate_override: Option<f64>,
) -> Result<StepOutput> {
    let cfg = sess.config;
    if prev_token >= source.extended_size() {
        return Err(ModelError::Contract(format!(
            "previous token {prev_token} outside the extended vocabulary of size {}",
            source.extended_size()
        )));
    }
    let input_id = if prev_token < source.vocab_len {
        prev_token
    } else {
        Vocab::UNK
    };
    let table = sess.param(ParamKind::WordEmb)?;
    let x = sess.graph.embedding_lookup(table, &[input_id])?;
    let x = sess.graph.reshape(x, vec![cfg.word_dim])?;
    let dw = sess.param(ParamKind::DecW)?;
    let db = sess.param(ParamKind::DecB)?;
    let (hidden, cell) = lstm_cell(sess.graph, x, state.hidden, state.cell, dw, db, cfg.decoder_dim())?;
    let (context, alpha) = attention(sess, hidden, enc)?;

    let features = sess.graph.concat(&[hidden, context], 0)?;
    let ow = sess.param(ParamKind::OutW)?;
    let ob = sess.param(ParamKind::OutB)?;
    let logits = sess.graph.matmul(features, ow)?;
    let logits = sess.graph.add(logits, ob)?;
    let p_vocab = sess.graph.softmax(logits)?;

    let gate = match gate_override {
        Some(p) => sess.graph.constant(Tensor::scalar(p)),
        None => {
            let gate_in = sess.graph.concat(&[hidden, context, x], 0)?;
            let gw = sess.param(ParamKind::GenW)?;
            let gb = sess.param(ParamKind::GenB)?;
            let z = sess.graph.matmul(gate_in, gw)?;
            let z = sess.graph.add(z, gb)?;
            sess.graph.sigmoid(z)?
        }
    };

    let ext = source.extended_size();
    let p_vocab_ext = if source.oov.is_empty() {
        p_vocab
    } else {
        let pad = sess.graph.constant(Tensor::zeros(vec![source.oov.len()]));
        sess.graph.concat(&[p_vocab, pad], 0)?
    };
    let copy = sess.graph.scatter_add(alpha, &source.ext_ids, ext)?;
    let generated = sess.graph.mul(gate, p_vocab_ext)?;
    let copy_weight = sess.graph.one_minus(gate)?;
    let copied = sess.graph.mul(copy_weight, copy)?;
    let dist = sess.graph.add(generated, copied)?;
    Ok(StepOutput {
        state: DecoderState { hidden, cell },
        dist,
        attention: alpha,
        gate,
    })
}

/// Worst relative gradient error of the full encode → init → three copy-enabled
/// decode steps → summed loss composite, over every parameter tensor of a tiny
/// DLPH-GDC model (d_w=4, d_p=3, d_d=2, H=5, four source tokens, one of them
/// out of vocabulary).
pub fn composite_grad_check(seed: u64, eps: f64) -> Result<f64> {
    let vocab = Vocab::from_tokens(
        Vocab::RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(["what", "atomic", "number", "8"].map(String::from))
            .collect(),
        1,
    )?;
    let config = ModelConfig {
        word_dim: 4,
        position_dim: 3,
        difficulty_dim: 2,
        hidden: 5,
        max_distance: 20,
        position_mode: PositionMode::Dlph,
        gdc: true,
        vocab_size: vocab.len(),
        max_decode_len: 5,
        beam_size: 3,
    };
    let mut params = ModelParams::init(&config, seed)?;
    // Larger-than-init weights so every gate is away from its linear regime.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (_, t) in params.iter_mut() {
        for v in t.values_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let sentence: Vec<String> = ["oxygen", "atomic", "number", "8"].map(String::from).to_vec();
    let source = SourceEncoding::new(&sentence, &vocab);
    let targets = [
        vocab.id("what"),
        source.target_id("oxygen", &vocab),
        vocab.id("number"),
    ];
    let inputs = [Vocab::SOS, targets[0], targets[1]];

    let kinds: Vec<ParamKind> = params.iter().map(|(k, _)| k).collect();
    let mut worst: f64 = 0.0;
    for kind in kinds {
        let tensor = params.get(kind).cloned().expect("kind listed by params");
        let err = grad_check(
            |g, x| {
                let mut sess = Session::new(g, &config, &params, false);
                sess.bind(kind, x);
                let enc = encode(&mut sess, &source, (3, 3), Difficulty::Hard)
                    .map_err(into_tensor_error)?;
                let mut state =
                    init_decoder(&mut sess, &enc, Difficulty::Hard).map_err(into_tensor_error)?;
                let mut losses = Vec::new();
                for (&inp, &tgt) in inputs.iter().zip(&targets) {
                    let step = decode_step(&mut sess, state, inp, &enc, &source)
                        .map_err(into_tensor_error)?;
                    losses.push(sess.graph.nll_loss(step.dist, tgt)?);
                    state = step.state;
                }
                let all = sess.graph.concat(&losses, 0)?;
                sess.graph.sum(all)
            },
            &tensor,
            eps,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn into_tensor_error(e: ModelError) -> crate::tensor::TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => crate::tensor::TensorError::Contract(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;

    fn vocab() -> Vocab {
        Vocab::from_tokens(
            Vocab::RESERVED
                .iter()
                .map(|s| s.to_string())
                .chain(
                    ["what", "is", "the", "atomic", "number", "of", "element", "8", "?"]
                        .map(String::from),
                )
                .collect(),
            1,
        )
        .unwrap()
    }

    fn config(v: &Vocab, mode: PositionMode, gdc: bool) -> ModelConfig {
        ModelConfig {
            word_dim: 6,
            position_dim: 4,
            difficulty_dim: 3,
            hidden: 5,
            max_distance: 20,
            position_mode: mode,
            gdc,
            vocab_size: v.len(),
            max_decode_len: 6,
            beam_size: 3,
        }
    }

    fn oxygen() -> Example {
        Example::from_raw(
            "s1",
            "Oxygen is a chemical element with symbol O and atomic number 8",
            61,
            "8",
            "What is the atomic number of the element oxygen?",
            Difficulty::Easy,
        )
        .unwrap()
    }

    #[test]
    fn encoder_shapes() {
        let v = vocab();
        let c = config(&v, PositionMode::Dlph, true);
        let p = ModelParams::init(&c, 3).unwrap();
        let ex = oxygen();
        let src = SourceEncoding::new(&ex.sentence_tokens, &v);
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &c, &p, false);
        let enc = encode(&mut s, &src, ex.answer_span, Difficulty::Easy).unwrap();
        assert_eq!(enc.len, 12);
        assert_eq!(s.graph.shape(enc.states), &[12, 10]);
        assert_eq!(s.graph.shape(enc.final_state), &[10]);
        assert!(matches!(
            encode(&mut s, &src, ex.answer_span, Difficulty::Unlabeled),
            Err(ModelError::Contract(_))
        ));
    }

    #[test]
    fn tied_tables_make_qwph_and_dlph_agree() {
        let v = vocab();
        let cq = config(&v, PositionMode::Qwph, false);
        let cd = config(&v, PositionMode::Dlph, false);
        let pq = ModelParams::init(&cq, 5).unwrap();
        let mut pd = ModelParams::init(&cd, 9).unwrap();
        for (kind, t) in pd.iter_mut() {
            let src = match kind {
                ParamKind::PosEasy | ParamKind::PosHard => ParamKind::PosShared,
                k => k,
            };
            *t = pq.get(src).unwrap().clone();
        }
        let ex = oxygen();
        let src = SourceEncoding::new(&ex.sentence_tokens, &v);
        let run = |c: &ModelConfig, p: &ModelParams, d: Difficulty| {
            let mut g = Graph::new();
            let mut s = Session::new(&mut g, c, p, false);
            let enc = encode(&mut s, &src, ex.answer_span, d).unwrap();
            s.graph.value(enc.states).to_vec()
        };
        let q = run(&cq, &pq, Difficulty::Easy);
        assert_eq!(q, run(&cd, &pd, Difficulty::Easy));
        assert_eq!(q, run(&cd, &pd, Difficulty::Hard));

        let pd_random = ModelParams::init(&cd, 9).unwrap();
        assert_ne!(
            run(&cd, &pd_random, Difficulty::Easy),
            run(&cd, &pd_random, Difficulty::Hard)
        );
    }

    #[test]
    fn decoder_initialization() {
        let v = vocab();
        let ex = oxygen();
        let src = SourceEncoding::new(&ex.sentence_tokens, &v);
        let c = config(&v, PositionMode::Qwph, true);
        let mut p = ModelParams::init(&c, 1).unwrap();
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &c, &p, false);
        let enc = encode(&mut s, &src, ex.answer_span, Difficulty::Easy).unwrap();
        let u0 = init_decoder(&mut s, &enc, Difficulty::Easy).unwrap();
        assert_eq!(s.graph.shape(u0.hidden), &[13]);
        assert!(init_decoder(&mut s, &enc, Difficulty::Unlabeled).is_err());

        for t in p.get_mut(ParamKind::DifficultyEmb).unwrap().values_mut() {
            *t = 0.0;
        }
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &c, &p, false);
        let enc = encode(&mut s, &src, ex.answer_span, Difficulty::Easy).unwrap();
        let e = init_decoder(&mut s, &enc, Difficulty::Easy).unwrap();
        let h = init_decoder(&mut s, &enc, Difficulty::Hard).unwrap();
        assert_eq!(s.graph.value(e.hidden), s.graph.value(h.hidden));

        let c = config(&v, PositionMode::Qwph, false);
        let p = ModelParams::init(&c, 1).unwrap();
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &c, &p, false);
        let enc = encode(&mut s, &src, ex.answer_span, Difficulty::Unlabeled).unwrap();
        let u0 = init_decoder(&mut s, &enc, Difficulty::Unlabeled).unwrap();
        assert_eq!(s.graph.value(u0.hidden), s.graph.value(enc.final_state));
        assert_eq!(s.graph.shape(u0.hidden), &[10]);
    }

    #[test]
    fn default_scale_decoder_width() {
        let c = ModelConfig {
            hidden: 128,
            difficulty_dim: 10,
            gdc: true,
            ..ModelConfig::default()
        };
        assert_eq!(c.decoder_dim(), 266);
    }

    #[test]
    fn attention_properties() {
        let v = vocab();
        let c = config(&v, PositionMode::None, false);
        let mut p = ModelParams::init(&c, 2).unwrap();
        let one = vec!["atomic".to_string()];
        let src = SourceEncoding::new(&one, &v);
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &c, &p, false);
        let enc = encode(&mut s, &src, (0, 0), Difficulty::Unlabeled).unwrap();
        let q = s.graph.constant(Tensor::vector(vec![0.3; 10]));
        let (ctx, alpha) = attention(&mut s, q, &enc).unwrap();
        assert_eq!(s.graph.value(alpha), &[1.0]);
        assert_eq!(s.graph.value(ctx), s.graph.value(enc.states));

        for w in p.get_mut(ParamKind::AttnW).unwrap().values_mut() {
            *w = 0.0;
        }
        let ex = oxygen();
        let src = SourceEncoding::new(&ex.sentence_tokens, &v);
        let mut g = Graph::new();
        let mut s = Session::new(&mut g, &c, &p, false);
        let enc = encode(&mut s, &src, ex.answer_span, Difficulty::Unlabeled).unwrap();
        let q = s.graph.constant(Tensor::vector(vec![0.7; 10]));
        let (_, alpha) = attention(&mut s, q, &enc).unwrap();
        for &a in s.graph.value(alpha) {
            assert!((a - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn copy_distribution_and_gate_extremes() {
        let v = vocab();
        let c = config(&v, PositionMode::Dlph, true);
        let p = ModelParams::init(&c, 4).unwrap();
        let ex = oxygen();
        let src = SourceEncoding::new(&ex.sentence_tokens, &v);
        assert!(!src.oov.is_empty());
        let run = |gate: Option<f64>| {
            let mut g = Graph::new();
            let mut s = Session::new(&mut g, &c, &p, false);
            let enc = encode(&mut s, &src, ex.answer_span, Difficulty::Easy).unwrap();
            let u0 = init_decoder(&mut s, &enc, Difficulty::Easy).unwrap();
            let out = decode_step_with_gate(&mut s, u0, Vocab::SOS, &enc, &src, gate).unwrap();
            (
                s.graph.value(out.dist).to_vec(),
                s.graph.value(out.attention).to_vec(),
                s.graph.value(out.gate)[0],
            )
        };
        let (dist, alpha, gate) = run(None);
        assert_eq!(dist.len(), src.extended_size());
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(gate < 1.0);
        // "oxygen" is out of vocabulary and only reachable by copying.
        let oxy = src.target_id("oxygen", &v);
        assert!(oxy >= v.len());
        assert!(alpha[0] > 0.0 && dist[oxy] > 0.0);

        let (gen_only, _, _) = run(Some(1.0));
        assert!(gen_only[v.len()..].iter().all(|&x| x == 0.0));
        assert!((gen_only[..v.len()].iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let (copy_only, alpha, _) = run(Some(0.0));
        let mut expected = vec![0.0; src.extended_size()];
        for (i, &id) in src.ext_ids.iter().enumerate() {
            expected[id] += alpha[i];
        }
        for (a, b) in copy_only.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn composite_gradient_is_exact() {
        for seed in [3, 17] {
            let err = composite_grad_check(seed, 1e-4).unwrap();
            assert!(err < 1e-4, "seed {seed}: worst relative error {err}");
        }
    }
}
