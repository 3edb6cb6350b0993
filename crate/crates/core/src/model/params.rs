use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    WordEmb,
    AnswerIndicator,
    PosShared,
    PosEasy,
    PosHard,
    DifficultyEmb,
    EncFwdW,
    EncFwdB,
    EncBwdW,
    EncBwdB,
    DecW,
    DecB,
    AttnW,
    OutW,
    OutB,
    GenW,
    GenB,
}

impl ParamKind {
    pub const COUNT: usize = 17;

    pub const ALL: [ParamKind; Self::COUNT] = [
        ParamKind::WordEmb,
        ParamKind::AnswerIndicator,
        ParamKind::PosShared,
        ParamKind::PosEasy,
        ParamKind::PosHard,
        ParamKind::DifficultyEmb,
        ParamKind::EncFwdW,
        ParamKind::EncFwdB,
        ParamKind::EncBwdW,
        ParamKind::EncBwdB,
        ParamKind::DecW,
        ParamKind::DecB,
        ParamKind::AttnW,
        ParamKind::OutW,
        ParamKind::OutB,
        ParamKind::GenW,
        ParamKind::GenB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::WordEmb => "word_embedding",
            ParamKind::AnswerIndicator => "answer_indicator",
            ParamKind::PosShared => "position_shared",
            ParamKind::PosEasy => "position_easy",
            ParamKind::PosHard => "position_hard",
            ParamKind::DifficultyEmb => "difficulty_embedding",
            ParamKind::EncFwdW => "encoder_forward_weight",
            ParamKind::EncFwdB => "encoder_forward_bias",
            ParamKind::EncBwdW => "encoder_backward_weight",
            ParamKind::EncBwdB => "encoder_backward_bias",
            ParamKind::DecW => "decoder_weight",
            ParamKind::DecB => "decoder_bias",
            ParamKind::AttnW => "attention_weight",
            ParamKind::OutW => "output_weight",
            ParamKind::OutB => "output_bias",
            ParamKind::GenW => "copy_gate_weight",
            ParamKind::GenB => "copy_gate_bias",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamKind> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

/// All learned tensors of one model, in the order given by
/// [`ModelConfig::param_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    entries: Vec<(ParamKind, Tensor)>,
    slots: [Option<usize>; ParamKind::COUNT],
}

impl ModelParams {
    /// Uniform(-0.1, 0.1) initialization from a seeded generator.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = config
            .param_shapes()
            .into_iter()
            .map(|(kind, shape)| {
                let n = shape.iter().product();
                let values = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
                Ok((kind, Tensor::new(shape, values)?.with_requires_grad(true)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_entries(entries))
    }

    fn from_entries(entries: Vec<(ParamKind, Tensor)>) -> Self {
        let mut slots = [None; ParamKind::COUNT];
        for (i, (kind, _)) in entries.iter().enumerate() {
            slots[kind.slot()] = Some(i);
        }
        ModelParams { entries, slots }
    }

    /// Rebuilds from named tensors, checking names and shapes against `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = config.param_shapes();
        if expected.len() != named.len() {
            return Err(ModelError::Contract(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                named.len()
            )));
        }
        let mut entries = Vec::with_capacity(named.len());
        for ((kind, shape), (name, tensor)) in expected.into_iter().zip(named) {
            if kind.name() != name || tensor.shape() != shape.as_slice() {
                return Err(ModelError::Contract(format!(
                    "parameter {name} {:?} does not match expected {} {shape:?}",
                    tensor.shape(),
                    kind.name()
                )));
            }
            entries.push((kind, tensor.with_requires_grad(true)));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn get(&self, kind: ParamKind) -> Option<&Tensor> {
        self.slots[kind.slot()].map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, kind: ParamKind) -> Option<&mut Tensor> {
        self.slots[kind.slot()].map(move |i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamKind, &Tensor)> {
        self.entries.iter().map(|(k, t)| (*k, t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamKind, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, t)| (*k, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}
