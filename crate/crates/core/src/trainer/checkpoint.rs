//! Versioned checkpoint files: a text header followed by raw little-endian
//! `f64` arrays.
//!
//! ```text
//! dqg-checkpoint <version>
//! config <ModelConfig as JSON>
//! vocab <{"min_freq": .., "tokens": [..]}>
//! meta <CheckpointMeta as JSON>
//! param <name> <dim,dim,..> <byte offset>     (one line per tensor)
//! end
//! <tensor data in manifest order>
//! ```

use std::fs;
use std::io::{self, BufRead};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocab;
use crate::model::{ModelConfig, ModelParams, QuestionGenerator};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dqg-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("truncated checkpoint: expected {expected} data bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub dev_perplexity: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    min_freq: usize,
    tokens: Vec<String>,
}

impl Checkpoint {
    pub fn generator(&self) -> crate::model::Result<QuestionGenerator> {
        QuestionGenerator::new(self.config.clone(), self.params.clone(), self.vocab.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let vocab = VocabRecord {
            min_freq: self.vocab.min_freq,
            tokens: self.vocab.tokens().to_vec(),
        };
        let mut header = format!("{MAGIC} {FORMAT_VERSION}\n");
        header.push_str(&format!("config {}\n", json(&self.config)));
        header.push_str(&format!("vocab {}\n", json(&vocab)));
        header.push_str(&format!("meta {}\n", json(&self.meta)));
        let mut offset = 0;
        for (kind, t) in self.params.iter() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            header.push_str(&format!("param {} {} {offset}\n", kind.name(), dims.join(",")));
            offset += t.numel() * 8;
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.reserve(offset);
        for (_, t) in self.params.iter() {
            for v in t.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut next_line = |what: &str| -> Result<String> {
            let mut line = String::new();
            let n = cursor
                .read_line(&mut line)
                .map_err(|_| CheckpointError::Format(format!("unreadable {what} line")))?;
            if n == 0 || !line.ends_with('\n') {
                return Err(CheckpointError::Format(format!("header ends before the {what} line")));
            }
            line.pop();
            Ok(line)
        };

        let first = next_line("version")?;
        let version = first
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| CheckpointError::Format(format!("bad first line {first:?}")))?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let config: ModelConfig = parse_field(&next_line("config")?, "config")?;
        let vocab: VocabRecord = parse_field(&next_line("vocab")?, "vocab")?;
        let meta: CheckpointMeta = parse_field(&next_line("meta")?, "meta")?;
        let vocab = Vocab::from_tokens(vocab.tokens, vocab.min_freq)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;

        let mut manifest: Vec<(String, Vec<usize>, usize)> = Vec::new();
        loop {
            let line = next_line("manifest")?;
            if line == "end" {
                break;
            }
            manifest.push(parse_manifest_line(&line)?);
        }
        let header_len = bytes.len() - cursor.len();
        let data = &bytes[header_len..];

        let expected_shapes = config.param_shapes();
        if expected_shapes.len() != manifest.len() {
            return Err(CheckpointError::Manifest(format!(
                "configuration implies {} tensors, manifest lists {}",
                expected_shapes.len(),
                manifest.len()
            )));
        }
        let mut offset = 0;
        for ((kind, shape), (name, dims, at)) in expected_shapes.iter().zip(&manifest) {
            if kind.name() != name || shape != dims {
                return Err(CheckpointError::Manifest(format!(
                    "entry {name} {dims:?} where {} {shape:?} was expected",
                    kind.name()
                )));
            }
            if *at != offset {
                return Err(CheckpointError::Manifest(format!(
                    "entry {name} at byte {at}, expected {offset}"
                )));
            }
            offset += dims.iter().product::<usize>() * 8;
        }
        if data.len() < offset {
            return Err(CheckpointError::Truncated {
                expected: offset,
                found: data.len(),
            });
        }
        if data.len() > offset {
            return Err(CheckpointError::Manifest(format!(
                "{} trailing bytes after the last tensor",
                data.len() - offset
            )));
        }

        let mut named = Vec::with_capacity(manifest.len());
        for (name, dims, at) in manifest {
            let n: usize = dims.iter().product();
            let values = data[at..at + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let tensor = Tensor::new(dims, values).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
            named.push((name, tensor));
        }
        let params =
            ModelParams::from_named(&config, named).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        Ok(Checkpoint {
            config,
            vocab,
            params,
            meta,
        })
    }
}

fn parse_field<T: for<'de> Deserialize<'de>>(line: &str, key: &str) -> Result<T> {
    let body = line
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| CheckpointError::Format(format!("expected a {key} line, got {line:?}")))?;
    serde_json::from_str(body).map_err(|e| CheckpointError::Format(format!("{key}: {e}")))
}

fn parse_manifest_line(line: &str) -> Result<(String, Vec<usize>, usize)> {
    let bad = || CheckpointError::Manifest(format!("malformed entry {line:?}"));
    let parts: Vec<&str> = line.split(' ').collect();
    let [tag, name, dims, offset] = parts[..] else {
        return Err(bad());
    };
    if tag != "param" {
        return Err(bad());
    }
    let dims = dims
        .split(',')
        .map(|d| d.parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let offset = offset.parse::<usize>().map_err(|_| bad())?;
    Ok((name.to_string(), dims, offset))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("header values serialize")
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, generate_synthetic_corpus, Difficulty, HintProfile};

    fn sample() -> (Checkpoint, Vec<crate::corpus::Example>) {
        let corpus = generate_synthetic_corpus(8, 3, HintProfile::default()).unwrap();
        let vocab = build_vocab(&corpus[..5], 1).unwrap();
        let config = ModelConfig {
            word_dim: 6,
            position_dim: 3,
            difficulty_dim: 2,
            hidden: 4,
            vocab_size: vocab.len(),
            max_decode_len: 6,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&config, 8).unwrap();
        let ckpt = Checkpoint {
            config,
            vocab,
            params,
            meta: CheckpointMeta {
                epoch: 3,
                dev_perplexity: 0.1 + 0.2,
                seed: 8,
            },
        };
        (ckpt, corpus)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (ckpt, corpus) = sample();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&ckpt, &a).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded, ckpt);
        for ((_, x), (_, y)) in loaded.params.iter().zip(ckpt.params.iter()) {
            assert!(x.values().iter().zip(y.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        save_checkpoint(&loaded, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        let before = ckpt.generator().unwrap();
        let after = loaded.generator().unwrap();
        for ex in &corpus {
            for d in [Difficulty::Easy, Difficulty::Hard] {
                assert_eq!(before.beam_search(ex, d, 3).unwrap(), after.beam_search(ex, d, 3).unwrap());
            }
        }
    }

    #[test]
    fn truncation_is_detected() {
        let (ckpt, _) = sample();
        let bytes = ckpt.to_bytes();
        for cut in [1, 8, 100] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..bytes.len() - cut]),
                Err(CheckpointError::Truncated { .. })
            ));
        }
        let header_end = bytes.windows(4).position(|w| w == b"end\n").unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..header_end]),
            Err(CheckpointError::Format(_))
        ));
    }

    #[test]
    fn version_and_manifest_errors_are_distinct() {
        let (ckpt, _) = sample();
        let bytes = ckpt.to_bytes();
        let text = String::from_utf8_lossy(&bytes).into_owned();

        let mut v2 = b"dqg-checkpoint 2".to_vec();
        v2.extend_from_slice(&bytes[format!("{MAGIC} 1").len()..]);
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(CheckpointError::Version { found: 2, expected: 1 })
        ));

        // Same byte length, different implied shapes.
        let at = text.find("\"word_dim\":6").unwrap();
        let mut bad = bytes.clone();
        bad[at..at + 12].copy_from_slice(b"\"word_dim\":7");
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Manifest(_))));

        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(CheckpointError::Manifest(_))));
        assert!(matches!(
            Checkpoint::from_bytes(b"hello\n"),
            Err(CheckpointError::Format(_))
        ));
    }
}
