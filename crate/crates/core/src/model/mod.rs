//! Characteristic-rich encoder and difficulty-controllable decoder.
//!
//! The difficulty label enters the computation at exactly two points: the
//! choice of position-embedding table under [`PositionMode::Dlph`], and the
//! difficulty variable concatenated to the encoder's final state when `gdc`
//! is on. Everything else is label-agnostic.

mod beam;
mod network;
mod params;

pub use beam::{greedy_decode, Hypothesis, QuestionGenerator};
pub use network::{
    attention, composite_grad_check, decode_step, decode_step_with_gate, encode, init_decoder,
    DecoderState, EncoderOutput, Session, SourceEncoding, StepOutput,
};
pub use params::{ModelParams, ParamKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Source of the position feature concatenated to each word embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionMode {
    /// Word embeddings only.
    None,
    /// Two-row table: outside / inside the answer.
    AnswerIndicator,
    /// One table indexed by clipped distance to the answer.
    Qwph,
    /// Separate easy and hard distance tables, selected by the label.
    Dlph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub position_dim: usize,
    pub difficulty_dim: usize,
    pub hidden: usize,
    pub max_distance: usize,
    pub position_mode: PositionMode,
    pub gdc: bool,
    pub vocab_size: usize,
    pub max_decode_len: usize,
    pub beam_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 128,
            position_dim: 50,
            difficulty_dim: 10,
            hidden: 128,
            max_distance: 20,
            position_mode: PositionMode::Dlph,
            gdc: true,
            vocab_size: 4,
            max_decode_len: 20,
            beam_size: 3,
        }
    }
}

impl ModelConfig {
    /// Baseline and ablation presets by their usual names:
    /// `l2a`, `ans`, `qwph`, `qwph-gdc`, `dlph`, `dlph-gdc`.
    pub fn variant(name: &str) -> Option<(PositionMode, bool)> {
        Some(match name.to_ascii_lowercase().as_str() {
            "l2a" => (PositionMode::None, false),
            "ans" => (PositionMode::AnswerIndicator, false),
            "qwph" => (PositionMode::Qwph, false),
            "qwph-gdc" => (PositionMode::Qwph, true),
            "dlph" => (PositionMode::Dlph, false),
            "dlph-gdc" => (PositionMode::Dlph, true),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("position_dim", self.position_dim),
            ("difficulty_dim", self.difficulty_dim),
            ("hidden", self.hidden),
            ("max_distance", self.max_distance),
            ("max_decode_len", self.max_decode_len),
            ("beam_size", self.beam_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 4 {
            return Err(ModelError::Config(format!(
                "vocab_size {} cannot hold the reserved tokens",
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// Whether generation reads the difficulty label at all.
    pub fn consumes_labels(&self) -> bool {
        self.gdc || self.position_mode == PositionMode::Dlph
    }

    /// Encoder input width: word embedding plus optional position feature.
    pub fn encoder_input_dim(&self) -> usize {
        match self.position_mode {
            PositionMode::None => self.word_dim,
            _ => self.word_dim + self.position_dim,
        }
    }

    /// Decoder hidden width: both encoder directions, plus the difficulty variable under GDC.
    pub fn decoder_dim(&self) -> usize {
        2 * self.hidden + if self.gdc { self.difficulty_dim } else { 0 }
    }

    /// Parameter tensors implied by this configuration, in storage order.
    pub fn param_shapes(&self) -> Vec<(ParamKind, Vec<usize>)> {
        let v = self.vocab_size;
        let dw = self.word_dim;
        let dp = self.position_dim;
        let h = self.hidden;
        let din = self.encoder_input_dim();
        let d = self.decoder_dim();
        let rows = self.max_distance + 1;
        let mut out = vec![(ParamKind::WordEmb, vec![v, dw])];
        match self.position_mode {
            PositionMode::None => {}
            PositionMode::AnswerIndicator => out.push((ParamKind::AnswerIndicator, vec![2, dp])),
            PositionMode::Qwph => out.push((ParamKind::PosShared, vec![rows, dp])),
            PositionMode::Dlph => {
                out.push((ParamKind::PosEasy, vec![rows, dp]));
                out.push((ParamKind::PosHard, vec![rows, dp]));
            }
        }
        if self.gdc {
            out.push((ParamKind::DifficultyEmb, vec![2, self.difficulty_dim]));
        }
        out.extend([
            (ParamKind::EncFwdW, vec![din + h, 4 * h]),
            (ParamKind::EncFwdB, vec![4 * h]),
            (ParamKind::EncBwdW, vec![din + h, 4 * h]),
            (ParamKind::EncBwdB, vec![4 * h]),
            (ParamKind::DecW, vec![dw + d, 4 * d]),
            (ParamKind::DecB, vec![4 * d]),
            (ParamKind::AttnW, vec![d, 2 * h]),
            (ParamKind::OutW, vec![d + 2 * h, v]),
            (ParamKind::OutB, vec![v]),
            (ParamKind::GenW, vec![d + 2 * h + dw]),
            (ParamKind::GenB, vec![1]),
        ]);
        out
    }

    /// Total number of scalar parameters.
    ///
    /// With `din = d_w + d_p` (or `d_w` without position features) and
    /// `D = 2H + d_d` (or `2H` without GDC):
    ///
    /// ```text
    /// V·d_w + P + G + 2·((din + H)·4H + 4H) + (d_w + D)·4D + 4D
    ///       + D·2H + (D + 2H)·V + V + (D + 2H + d_w) + 1
    /// ```
    ///
    /// where `P` is `(L+1)·d_p` for QWPH, `2·(L+1)·d_p` for DLPH, `2·d_p`
    /// for the answer indicator and 0 otherwise, and `G` is `2·d_d` under GDC.
    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(c: &ModelConfig) -> usize {
        let (v, dw, dp, dd, h, l) = (
            c.vocab_size,
            c.word_dim,
            c.position_dim,
            c.difficulty_dim,
            c.hidden,
            c.max_distance,
        );
        let din = c.encoder_input_dim();
        let d = c.decoder_dim();
        let p = match c.position_mode {
            PositionMode::None => 0,
            PositionMode::AnswerIndicator => 2 * dp,
            PositionMode::Qwph => (l + 1) * dp,
            PositionMode::Dlph => 2 * (l + 1) * dp,
        };
        let g = if c.gdc { 2 * dd } else { 0 };
        v * dw
            + p
            + g
            + 2 * ((din + h) * 4 * h + 4 * h)
            + (dw + d) * 4 * d
            + 4 * d
            + d * 2 * h
            + (d + 2 * h) * v
            + v
            + (d + 2 * h + dw)
            + 1
    }

    #[test]
    fn param_count_matches_formula_for_every_variant() {
        for name in ["l2a", "ans", "qwph", "qwph-gdc", "dlph", "dlph-gdc"] {
            let (position_mode, gdc) = ModelConfig::variant(name).unwrap();
            let c = ModelConfig {
                vocab_size: 57,
                position_mode,
                gdc,
                ..ModelConfig::default()
            };
            assert_eq!(c.param_count(), closed_form(&c), "{name}");
        }
    }

    #[test]
    fn decoder_width_follows_gdc() {
        let mut c = ModelConfig::default();
        assert_eq!(c.decoder_dim(), 266);
        c.gdc = false;
        assert_eq!(c.decoder_dim(), 256);
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.beam_size = 0;
        assert!(c.validate().is_err());
        let c = ModelConfig {
            vocab_size: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
