//! Run configuration: every extraction, model, training and decoding knob
//! as a flat `key = value` map. Later sources override earlier ones and
//! unknown keys are rejected.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::model::{Ablation, ModelConfig};
use crate::paths::ExtractionConfig;
use crate::train::{Task, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {message}")]
    BadValue { key: String, message: String },
    #[error("{origin}:{line}: expected key = value")]
    Syntax { origin: String, line: usize },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub extraction: ExtractionConfig,
    /// Contexts kept per stored example (0 keeps all).
    pub max_contexts: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub beam: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            extraction: ExtractionConfig::default(),
            max_contexts: 1000,
            val_fraction: 0.1,
            test_fraction: 0.1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            beam: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "max_path_length",
    "max_contexts",
    "val_fraction",
    "test_fraction",
    "d_nodes",
    "d_tokens",
    "d_hidden",
    "d_target",
    "d_path",
    "d_decoder",
    "k",
    "input_dropout",
    "recurrent_dropout",
    "max_target_len",
    "max_source_vocab",
    "max_target_vocab",
    "ablation",
    "lr0",
    "lr_decay",
    "momentum",
    "batch_size",
    "max_epochs",
    "patience",
    "clip_norm",
    "task",
    "beam",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("{value:?}: {e}"),
    })
}

/// `none` or a number.
fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".to_string(), T::to_string)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "seed" => {
                t.seed = parse(key, value)?;
                self.extraction.seed = t.seed;
            }
            "max_path_length" => self.extraction.max_path_length = parse(key, value)?,
            "max_contexts" => self.max_contexts = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "d_nodes" => m.d_nodes = parse(key, value)?,
            "d_tokens" => m.d_tokens = parse(key, value)?,
            "d_hidden" => m.d_hidden = parse(key, value)?,
            "d_target" => m.d_target = parse(key, value)?,
            "d_path" => m.d_path = parse(key, value)?,
            "d_decoder" => m.d_decoder = parse(key, value)?,
            "k" => {
                m.k = parse(key, value)?;
                self.extraction.max_paths_per_example = m.k;
            }
            "input_dropout" => m.input_dropout = parse(key, value)?,
            "recurrent_dropout" => m.recurrent_dropout = parse(key, value)?,
            "max_target_len" => m.max_target_len = parse(key, value)?,
            "max_source_vocab" => m.max_source_vocab = parse_opt(key, value)?,
            "max_target_vocab" => m.max_target_vocab = parse_opt(key, value)?,
            "ablation" => m.ablation = parse::<Ablation>(key, value)?,
            "lr0" => t.lr0 = parse(key, value)?,
            "lr_decay" => t.lr_decay = parse(key, value)?,
            "momentum" => t.momentum = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse_opt(key, value)?,
            "task" => t.task = parse::<Task>(key, value)?,
            "beam" => self.beam = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let t = &self.train;
        let v = match key {
            "seed" => t.seed.to_string(),
            "max_path_length" => self.extraction.max_path_length.to_string(),
            "max_contexts" => self.max_contexts.to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "test_fraction" => self.test_fraction.to_string(),
            "d_nodes" => m.d_nodes.to_string(),
            "d_tokens" => m.d_tokens.to_string(),
            "d_hidden" => m.d_hidden.to_string(),
            "d_target" => m.d_target.to_string(),
            "d_path" => m.d_path.to_string(),
            "d_decoder" => m.d_decoder.to_string(),
            "k" => m.k.to_string(),
            "input_dropout" => m.input_dropout.to_string(),
            "recurrent_dropout" => m.recurrent_dropout.to_string(),
            "max_target_len" => m.max_target_len.to_string(),
            "max_source_vocab" => show_opt(&m.max_source_vocab),
            "max_target_vocab" => show_opt(&m.max_target_vocab),
            "ablation" => m.ablation.name().to_string(),
            "lr0" => t.lr0.to_string(),
            "lr_decay" => t.lr_decay.to_string(),
            "momentum" => t.momentum.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "patience" => t.patience.to_string(),
            "clip_norm" => show_opt(&t.clip_norm),
            "task" => match t.task {
                Task::F1 => "f1".into(),
                Task::Bleu => "bleu".into(),
            },
            "beam" => self.beam.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.to_string(),
                line: i + 1,
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `key=value` as given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            origin: "--set".into(),
            line: 1,
        })?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: String| ConfigError::BadValue {
            key: key.into(),
            message,
        };
        self.extraction.validate().map_err(|e| bad("max_path_length", e.to_string()))?;
        self.model.validate().map_err(|e| bad("model", e.to_string()))?;
        self.train.validate().map_err(|e| bad("train", e.to_string()))?;
        for (key, f) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(bad(key, format!("must be in [0, 1), got {f}")));
            }
        }
        if self.val_fraction + self.test_fraction >= 1.0 {
            return Err(bad("val_fraction", "val_fraction + test_fraction must be below 1".into()));
        }
        if self.beam == 0 {
            return Err(bad("beam", "must be at least 1".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, one `key = value` line each.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }
}
