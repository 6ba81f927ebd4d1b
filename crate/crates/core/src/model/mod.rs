//! Path-attention encoder-decoder.
//!
//! Each path context becomes `z = tanh(W_in · [paths; left; right])`, where
//! `paths` is the concatenated final state of a bi-LSTM over the node-symbol
//! embeddings and `left`/`right` are sums of subtoken embeddings. The decoder
//! starts from the mean of the `z` rows and at every step attends over them:
//!
//! ```text
//! α = softmax(h_t W_a Zᵀ)    c_t = α Z    p = softmax(tanh([c_t; h_t] W_c) W_s)
//! ```

mod forward;
mod gradcheck;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use thiserror::Error;

use crate::numerics::{CheckpointError, LstmParams, NumericsError, Parameter, Record, RecordSet};

pub use forward::{ContextRecord, DecoderState, Encoded, ForwardRecord, IndexedContext, IndexedExample, Mode, StepOutput};
pub use gradcheck::{gradient_check, relative_error, GradCheck};
pub use vocab::{joined, Vocab, Vocabs, EOS, PAD, SOS, SOURCE_UNK, TARGET_EOS, TARGET_PAD, TARGET_SOS, TARGET_UNK, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("example has no path contexts")]
    EmptyContexts,
    #[error("example has an empty target")]
    EmptyTarget,
    #[error("every attention row is masked")]
    AllMasked,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// The full model and its six single-component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ablation {
    Full,
    /// `z` from the two terminal tokens only.
    NoAstNodes,
    /// One softmax over whole names, queried by the start state.
    NoDecoder,
    /// Whole-token embeddings instead of subtoken sums.
    NoTokenSplit,
    /// `z` from the path encoding only.
    NoTokens,
    /// The decoder sees only its start state (`c_t = 0`).
    NoAttention,
    /// One fixed sample of `k` contexts per example for the whole run.
    NoRandom,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Full,
        Ablation::NoAstNodes,
        Ablation::NoDecoder,
        Ablation::NoTokenSplit,
        Ablation::NoTokens,
        Ablation::NoAttention,
        Ablation::NoRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoAstNodes => "no_ast_nodes",
            Ablation::NoDecoder => "no_decoder",
            Ablation::NoTokenSplit => "no_token_split",
            Ablation::NoTokens => "no_tokens",
            Ablation::NoAttention => "no_attention",
            Ablation::NoRandom => "no_random",
        }
    }

    /// Row label for reports.
    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full model",
            Ablation::NoAstNodes => "no AST nodes (tokens only)",
            Ablation::NoDecoder => "no decoder (whole-name softmax)",
            Ablation::NoTokenSplit => "no token splitting",
            Ablation::NoTokens => "no tokens (AST nodes only)",
            Ablation::NoAttention => "no attention",
            Ablation::NoRandom => "no random resampling",
        }
    }

    pub fn uses_paths(self) -> bool {
        self != Ablation::NoAstNodes
    }

    pub fn uses_tokens(self) -> bool {
        self != Ablation::NoTokens
    }

    pub fn splits_tokens(self) -> bool {
        self != Ablation::NoTokenSplit
    }

    pub fn has_decoder(self) -> bool {
        self != Ablation::NoDecoder
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, Ablation::NoAttention | Ablation::NoDecoder)
    }

    pub fn resamples(self) -> bool {
        self != Ablation::NoRandom
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == norm || (norm == "none" && *a == Ablation::Full))
            .ok_or_else(|| {
                let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
                format!("unknown ablation {s:?} (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_nodes: usize,
    pub d_tokens: usize,
    pub d_hidden: usize,
    pub d_target: usize,
    /// Hidden size of each path-LSTM direction.
    pub d_path: usize,
    pub d_decoder: usize,
    /// Contexts sampled per example during training.
    pub k: usize,
    pub input_dropout: f64,
    pub recurrent_dropout: f64,
    pub max_target_len: usize,
    pub max_source_vocab: Option<usize>,
    pub max_target_vocab: Option<usize>,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_nodes: 128,
            d_tokens: 128,
            d_hidden: 128,
            d_target: 128,
            d_path: 128,
            d_decoder: 320,
            k: 200,
            input_dropout: 0.25,
            recurrent_dropout: 0.5,
            max_target_len: 10,
            max_source_vocab: None,
            max_target_vocab: None,
            ablation: Ablation::Full,
        }
    }
}

impl ModelConfig {
    /// Same width for every embedding and hidden layer.
    pub fn uniform(d: usize) -> ModelConfig {
        ModelConfig {
            d_nodes: d,
            d_tokens: d,
            d_hidden: d,
            d_target: d,
            d_path: d,
            d_decoder: d,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("d_nodes", self.d_nodes),
            ("d_tokens", self.d_tokens),
            ("d_hidden", self.d_hidden),
            ("d_target", self.d_target),
            ("d_path", self.d_path),
            ("d_decoder", self.d_decoder),
            ("k", self.k),
            ("max_target_len", self.max_target_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        for (name, rate) in [("input_dropout", self.input_dropout), ("recurrent_dropout", self.recurrent_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(ModelError::Config(format!("{name} must be in [0, 1), got {rate}")));
            }
        }
        for (name, cap) in [("max_source_vocab", self.max_source_vocab), ("max_target_vocab", self.max_target_vocab)] {
            if cap.is_some_and(|c| c < 5) {
                return Err(ModelError::Config(format!("{name} is too small to hold the special tokens")));
            }
        }
        Ok(())
    }

    /// Rows of `W_in`.
    pub fn input_width(&self) -> usize {
        let paths = if self.ablation.uses_paths() { 2 * self.d_path } else { 0 };
        let tokens = if self.ablation.uses_tokens() { 2 * self.d_tokens } else { 0 };
        paths + tokens
    }

    fn has_bridge(&self) -> bool {
        self.ablation.has_decoder() && self.d_hidden != self.d_decoder
    }
}

/// All trainable tensors. Components an ablation removes are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub e_nodes: Option<Parameter>,
    pub path_fwd: Option<LstmParams>,
    pub path_bwd: Option<LstmParams>,
    pub e_source: Option<Parameter>,
    pub w_in: Parameter,
    /// Maps the mean of `z` to the decoder width when the two differ.
    pub w_bridge: Option<Parameter>,
    pub e_target: Option<Parameter>,
    pub decoder: Option<LstmParams>,
    pub w_a: Option<Parameter>,
    pub w_c: Option<Parameter>,
    pub w_s: Parameter,
}

impl ModelParams {
    /// Glorot-initialized parameters; all zeros when `rng` is `None`.
    pub fn new(cfg: &ModelConfig, vocabs: &Vocabs, mut rng: Option<&mut dyn RngCore>) -> ModelParams {
        let mut matrix = |name: &str, shape: &[usize]| match rng.as_deref_mut() {
            Some(r) => Parameter::glorot(name, shape, r),
            None => Parameter::zeros(name, shape),
        };
        let a = cfg.ablation;
        let e_nodes = a.uses_paths().then(|| matrix("E_nodes", &[vocabs.nodes.len(), cfg.d_nodes]));
        let e_source = a.uses_tokens().then(|| matrix("E_subtokens", &[vocabs.source.len(), cfg.d_tokens]));
        let w_in = matrix("W_in", &[cfg.input_width(), cfg.d_hidden]);
        let w_bridge = cfg.has_bridge().then(|| matrix("W_bridge", &[cfg.d_hidden, cfg.d_decoder]));
        let e_target = a.has_decoder().then(|| matrix("E_target", &[vocabs.target.len(), cfg.d_target]));
        let w_a = a.has_attention().then(|| matrix("W_a", &[cfg.d_decoder, cfg.d_hidden]));
        let w_c = a.has_decoder().then(|| matrix("W_c", &[cfg.d_hidden + cfg.d_decoder, cfg.d_decoder]));
        let s_rows = if a.has_decoder() { cfg.d_decoder } else { cfg.d_hidden };
        let w_s = matrix("W_s", &[s_rows, vocabs.target.len()]);
        let mut lstm = |name: &str, input: usize, hidden: usize| match rng.as_deref_mut() {
            Some(r) => LstmParams::new(name, input, hidden, r),
            None => LstmParams::zeros(name, input, hidden),
        };
        let path_fwd = a.uses_paths().then(|| lstm("path_fwd", cfg.d_nodes, cfg.d_path));
        let path_bwd = a.uses_paths().then(|| lstm("path_bwd", cfg.d_nodes, cfg.d_path));
        let decoder = a.has_decoder().then(|| lstm("decoder", cfg.d_target, cfg.d_decoder));
        ModelParams {
            e_nodes,
            path_fwd,
            path_bwd,
            e_source,
            w_in,
            w_bridge,
            e_target,
            decoder,
            w_a,
            w_c,
            w_s,
        }
    }

    /// Every parameter in a fixed order.
    pub fn iter(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = Vec::new();
        out.extend(&self.e_nodes);
        for l in [&self.path_fwd, &self.path_bwd].into_iter().flatten() {
            out.extend(l.parameters());
        }
        out.extend(&self.e_source);
        out.push(&self.w_in);
        out.extend(&self.w_bridge);
        out.extend(&self.e_target);
        if let Some(l) = &self.decoder {
            out.extend(l.parameters());
        }
        out.extend(&self.w_a);
        out.extend(&self.w_c);
        out.push(&self.w_s);
        out
    }

    pub fn iter_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::new();
        out.extend(&mut self.e_nodes);
        for l in [&mut self.path_fwd, &mut self.path_bwd].into_iter().flatten() {
            out.extend(l.parameters_mut());
        }
        out.extend(&mut self.e_source);
        out.push(&mut self.w_in);
        out.extend(&mut self.w_bridge);
        out.extend(&mut self.e_target);
        if let Some(l) = &mut self.decoder {
            out.extend(l.parameters_mut());
        }
        out.extend(&mut self.w_a);
        out.extend(&mut self.w_c);
        out.push(&mut self.w_s);
        out
    }

    pub fn zero_grad(&mut self) {
        self.iter_mut().into_iter().for_each(Parameter::zero_grad);
    }

    pub fn count(&self) -> usize {
        self.iter().iter().map(|p| p.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().iter().all(|p| p.value().all_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub params: ModelParams,
}

const U64_KEYS: &[&str] = &[
    "d_nodes",
    "d_tokens",
    "d_hidden",
    "d_target",
    "d_path",
    "d_decoder",
    "k",
    "max_target_len",
    "max_source_vocab",
    "max_target_vocab",
];

impl Model {
    pub fn new(config: ModelConfig, vocabs: Vocabs, rng: &mut dyn RngCore) -> Result<Model, ModelError> {
        config.validate()?;
        let params = ModelParams::new(&config, &vocabs, Some(rng));
        Ok(Model { config, vocabs, params })
    }

    /// Hyperparameters, vocabularies and parameter values (and momentum
    /// buffers when `with_momentum`) as checkpoint records.
    pub fn to_records(&self, as_f32: bool, with_momentum: bool) -> Vec<Record> {
        let c = &self.config;
        let values = [
            c.d_nodes,
            c.d_tokens,
            c.d_hidden,
            c.d_target,
            c.d_path,
            c.d_decoder,
            c.k,
            c.max_target_len,
            c.max_source_vocab.unwrap_or(0),
            c.max_target_vocab.unwrap_or(0),
        ];
        let mut out: Vec<Record> = U64_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| Record::u64s(format!("hparam.{k}"), vec![v as u64]))
            .collect();
        out.push(Record::scalar_f64("hparam.input_dropout", c.input_dropout));
        out.push(Record::scalar_f64("hparam.recurrent_dropout", c.recurrent_dropout));
        out.push(Record::text("hparam.ablation", vec![c.ablation.name().to_string()]));
        out.push(Record::text("vocab.nodes", self.vocabs.nodes.items().to_vec()));
        out.push(Record::text("vocab.source", self.vocabs.source.items().to_vec()));
        out.push(Record::text("vocab.target", self.vocabs.target.items().to_vec()));
        for p in self.params.iter() {
            out.push(Record::tensor(format!("param.{}", p.name()), p.value(), as_f32));
        }
        if with_momentum {
            for p in self.params.iter() {
                out.push(Record::tensor(format!("momentum.{}", p.name()), p.momentum(), false));
            }
        }
        out
    }

    /// Rebuilds a model; momentum buffers are restored when present.
    pub fn from_records(set: &RecordSet) -> Result<Model, ModelError> {
        let mut v = Vec::new();
        for k in U64_KEYS {
            v.push(set.u64(&format!("hparam.{k}"))? as usize);
        }
        let opt = |x: usize| (x != 0).then_some(x);
        let ablation = match set.text("hparam.ablation")? {
            [name] => name.parse().map_err(ModelError::Config)?,
            _ => return Err(ModelError::Config("bad ablation record".into())),
        };
        let config = ModelConfig {
            d_nodes: v[0],
            d_tokens: v[1],
            d_hidden: v[2],
            d_target: v[3],
            d_path: v[4],
            d_decoder: v[5],
            k: v[6],
            max_target_len: v[7],
            max_source_vocab: opt(v[8]),
            max_target_vocab: opt(v[9]),
            input_dropout: set.f64("hparam.input_dropout")?,
            recurrent_dropout: set.f64("hparam.recurrent_dropout")?,
            ablation,
        };
        config.validate()?;
        let vocabs = Vocabs {
            nodes: Vocabs::source_from_items(set.text("vocab.nodes")?.to_vec())?,
            source: Vocabs::source_from_items(set.text("vocab.source")?.to_vec())?,
            target: Vocabs::target_from_items(set.text("vocab.target")?.to_vec())?,
        };
        let mut params = ModelParams::new(&config, &vocabs, None);
        for p in params.iter_mut() {
            let name = p.name().to_string();
            p.set_value(set.tensor(&format!("param.{name}"))?)?;
            let m = format!("momentum.{name}");
            if set.contains(&m) {
                p.set_momentum(set.tensor(&m)?)?;
            }
        }
        Ok(Model { config, vocabs, params })
    }
}

#[cfg(test)]
mod tests;
