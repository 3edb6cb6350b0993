//! `key = value` run configuration shared by every subcommand.
//!
//! Blank lines and lines starting with `#` are ignored. Keys must be known;
//! a key that a subcommand does not use is simply ignored by it. Command-line
//! flags override file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::Failure;

pub const KNOWN_KEYS: &[&str] = &[
    // paths
    "input", "output", "train", "dev", "checkpoint", "log", "report", "dataset", "generations",
    "reversed",
    // shared
    "seed",
    // synth
    "n", "easy_max_dist", "hard_min_dist",
    // label
    "k",
    // model
    "variant", "word_dim", "position_dim", "difficulty_dim", "hidden", "max_distance",
    "position_mode", "gdc", "max_decode_len", "beam_size", "min_freq",
    // training
    "learning_rate", "beta1", "beta2", "adam_epsilon", "clip_norm", "batch_size", "max_epochs",
    "patience",
    // generate
    "difficulty",
    // gradcheck
    "eps", "tolerance",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str, origin: &str) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::new("config", format!("{origin}:{}: expected key = value, got {line:?}", i + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Failure::new("config", format!("{origin}:{}: unknown key {key:?}", i + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::new("io", format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    /// Applies command-line flags that were given.
    pub fn set<T: Display>(&mut self, key: &str, value: Option<T>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Failure::new("config", format!("invalid value {v:?} for {key}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.values
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Failure::new("usage", format!("missing required setting --{}", key.replace('_', "-"))))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }
}
