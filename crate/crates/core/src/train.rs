//! Minibatch training: seeded shuffling, per-iteration context resampling,
//! Nesterov updates with per-epoch learning-rate decay, validation, early
//! stopping and exact-resume checkpoints.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::decode::{greedy_decode, DecodeError};
use crate::eval::{corpus_f1, smoothed_bleu, DumpLine, EvalError, F1Report};
use crate::model::{IndexedExample, Mode, Model, ModelError};
use crate::numerics::{clip_grad_norm, decode_records, encode_records, nesterov_update, CheckpointError, Payload, Record, RecordSet};
use crate::paths::{sample_indices, Example};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("loss diverged at epoch {epoch}, step {step} (example {example}): {loss}")]
    Divergence { epoch: usize, step: u64, example: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Task {
    /// Subtoken F1 (micro).
    #[default]
    F1,
    /// Smoothed corpus BLEU over space-joined subtokens.
    Bleu,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f1" => Ok(Task::F1),
            "bleu" => Ok(Task::Bleu),
            _ => Err(format!("unknown task {s:?} (expected f1 or bleu)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub task: Task,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            lr_decay: 0.95,
            momentum: 0.95,
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            clip_norm: None,
            task: Task::F1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(TrainError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(TrainError::Config(format!("lr_decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(TrainError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// `lr0 · decay^epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: u64,
    pub lr: f64,
    pub best_score: Option<f64>,
    pub best_epoch: usize,
    pub epochs_since_best: usize,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> TrainState {
        TrainState {
            epoch: 0,
            global_step: 0,
            lr: cfg.lr0,
            best_score: None,
            best_epoch: 0,
            epochs_since_best: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Rate after this epoch's decay.
    pub lr: f64,
    /// Context indices used for each example (by dataset position).
    pub selections: Vec<Vec<usize>>,
}

/// The fixed per-example sample used when resampling is ablated. Depends
/// only on the seed and the example position, never on the epoch.
pub fn fixed_selection(seed: u64, example: usize, n: usize, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(example as u64 + 1);
    sample_indices(n, k, &mut rng)
}

/// Indexes a dataset against the model vocabularies; examples with no
/// contexts or no target are rejected.
pub fn index_dataset(model: &Model, data: &[Example]) -> Result<Vec<IndexedExample>, TrainError> {
    data.iter()
        .map(|ex| {
            if ex.contexts.is_empty() {
                return Err(TrainError::Model(ModelError::EmptyContexts));
            }
            Ok(model.index_example(ex)?)
        })
        .collect()
}

/// One pass over `data`: shuffle, then per batch resample contexts, run
/// forward/backward with loss averaged over the batch, and take one
/// Nesterov step. The learning rate decays once at the end.
pub fn train_epoch(model: &mut Model, data: &[IndexedExample], cfg: &TrainConfig, state: &mut TrainState) -> Result<EpochStats, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut state.rng);
    let resample = model.config.ablation.resamples();
    let k = model.config.k;
    let mut selections = vec![Vec::new(); data.len()];
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        model.params.zero_grad();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let ex = &data[i];
            let n = ex.contexts.len();
            let selection = if resample {
                model.select_contexts(n, Some(&mut state.rng as &mut dyn RngCore))
            } else {
                fixed_selection(cfg.seed, i, n, k)
            };
            let rec = model.forward(ex, &selection, &mut Mode::Train(&mut state.rng))?;
            if !rec.loss.is_finite() {
                return Err(TrainError::Divergence {
                    epoch: state.epoch + 1,
                    step: state.global_step,
                    example: i,
                    loss: rec.loss,
                });
            }
            total += rec.loss;
            model.backward(ex, rec, scale);
            selections[i] = selection;
        }
        if let Some(c) = cfg.clip_norm {
            clip_grad_norm(model.params.iter_mut(), c);
        }
        for p in model.params.iter_mut() {
            nesterov_update(p, state.lr, cfg.momentum);
        }
        state.global_step += 1;
    }
    state.epoch += 1;
    state.lr = cfg.lr_at(state.epoch);
    Ok(EpochStats {
        epoch: state.epoch,
        mean_loss: total / data.len() as f64,
        lr: state.lr,
        selections,
    })
}

/// Greedy predictions for every example, in the prediction-dump shape.
pub fn predict_dump(model: &Model, data: &[Example]) -> Result<Vec<DumpLine>, TrainError> {
    data.iter()
        .map(|ex| {
            let ix = model.index_example(ex)?;
            let p = greedy_decode(model, &ix)?;
            Ok(DumpLine {
                gold: ex.target.clone(),
                predicted: p.subtokens,
                score: p.score,
            })
        })
        .collect()
}

pub fn dump_f1_report(dump: &[DumpLine]) -> Result<F1Report, TrainError> {
    let pairs: Vec<_> = dump.iter().map(|d| (d.predicted.clone(), d.gold.clone())).collect();
    Ok(corpus_f1(&pairs)?)
}

/// Task metric of a dump: micro F1 in `[0, 1]` or BLEU in `[0, 100]`.
pub fn dump_metric(dump: &[DumpLine], task: Task) -> Result<f64, TrainError> {
    match task {
        Task::F1 => Ok(dump_f1_report(dump)?.micro.f1),
        Task::Bleu => {
            let cands: Vec<Vec<String>> = dump.iter().map(|d| d.predicted.iter().map(|s| s.to_lowercase()).collect()).collect();
            let refs: Vec<Vec<Vec<String>>> = dump.iter().map(|d| vec![d.gold.iter().map(|s| s.to_lowercase()).collect()]).collect();
            Ok(smoothed_bleu(&cands, &refs)?.bleu)
        }
    }
}

/// Greedy-decodes `data` and scores it; the model is not modified.
pub fn validate(model: &Model, data: &[Example], task: Task) -> Result<f64, TrainError> {
    dump_metric(&predict_dump(model, data)?, task)
}

/// A model together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub state: TrainState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub val: Option<f64>,
    pub seconds: f64,
}

impl EpochLog {
    /// `epoch  loss  lr  val  seconds`, tab-separated; `-` when there is no
    /// validation set.
    pub fn to_line(&self) -> String {
        let val = self.val.map_or("-".to_string(), |v| format!("{v:.6}"));
        format!("{}\t{:.6}\t{:e}\t{}\t{:.2}", self.epoch, self.mean_loss, self.lr, val, self.seconds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
    pub best_score: Option<f64>,
    pub best_epoch: usize,
}

const STATE_U64: &[&str] = &["epoch", "global_step", "best_epoch", "epochs_since_best", "batch_size", "max_epochs", "patience", "seed"];

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Trainer, TrainError> {
        config.validate()?;
        let state = TrainState::new(&config);
        Ok(Trainer { model, config, state })
    }

    pub fn epoch(&mut self, data: &[IndexedExample]) -> Result<EpochStats, TrainError> {
        train_epoch(&mut self.model, data, &self.config, &mut self.state)
    }

    /// Trains until `max_epochs` or until validation stops improving for
    /// `patience` epochs. The best state (every state, without validation
    /// data) is written to `best_path` and the latest to `last_path`.
    pub fn fit(
        &mut self,
        train: &[Example],
        val: &[Example],
        best_path: Option<&Path>,
        last_path: Option<&Path>,
        log: &mut dyn Write,
    ) -> Result<FitReport, TrainError> {
        let data = index_dataset(&self.model, train)?;
        let mut epochs = Vec::new();
        let mut stopped_early = false;
        while self.state.epoch < self.config.max_epochs {
            let start = Instant::now();
            let stats = self.epoch(&data)?;
            let val_score = if val.is_empty() { None } else { Some(validate(&self.model, val, self.config.task)?) };
            let improved = match (val_score, self.state.best_score) {
                (None, _) => true,
                (Some(v), None) => v.is_finite(),
                (Some(v), Some(b)) => v > b,
            };
            if improved {
                self.state.best_score = val_score;
                self.state.best_epoch = stats.epoch;
                self.state.epochs_since_best = 0;
                if let Some(p) = best_path {
                    self.save(p)?;
                }
            } else {
                self.state.epochs_since_best += 1;
            }
            let entry = EpochLog {
                epoch: stats.epoch,
                mean_loss: stats.mean_loss,
                lr: stats.lr,
                val: val_score,
                seconds: start.elapsed().as_secs_f64(),
            };
            if let Some(p) = last_path {
                self.save(p)?;
            }
            let _ = writeln!(log, "{}", entry.to_line());
            epochs.push(entry);
            if val_score.is_some() && self.state.epochs_since_best >= self.config.patience {
                stopped_early = true;
                break;
            }
        }
        Ok(FitReport {
            epochs,
            stopped_early,
            best_score: self.state.best_score,
            best_epoch: self.state.best_epoch,
        })
    }

    /// Model, momentum buffers, training config and state, including the
    /// rng position, as checkpoint records.
    pub fn to_records(&self) -> Vec<Record> {
        let mut out = self.model.to_records(false, true);
        let s = &self.state;
        let c = &self.config;
        let ints = [
            s.epoch as u64,
            s.global_step,
            s.best_epoch as u64,
            s.epochs_since_best as u64,
            c.batch_size as u64,
            c.max_epochs as u64,
            c.patience as u64,
            c.seed,
        ];
        for (k, v) in STATE_U64.iter().zip(ints) {
            out.push(Record::u64s(format!("train.{k}"), vec![v]));
        }
        out.push(Record::scalar_f64("train.lr", s.lr));
        out.push(Record::scalar_f64("train.lr0", c.lr0));
        out.push(Record::scalar_f64("train.lr_decay", c.lr_decay));
        out.push(Record::scalar_f64("train.momentum", c.momentum));
        out.push(optional_f64("train.clip_norm", c.clip_norm));
        out.push(optional_f64("train.best_score", s.best_score));
        let task = match c.task {
            Task::F1 => "f1",
            Task::Bleu => "bleu",
        };
        out.push(Record::text("train.task", vec![task.into()]));
        let seed = s.rng.get_seed();
        let mut words: Vec<u64> = seed.chunks(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let pos = s.rng.get_word_pos();
        words.push(s.rng.get_stream());
        words.push(pos as u64);
        words.push((pos >> 64) as u64);
        out.push(Record::u64s("train.rng", words));
        out
    }

    pub fn from_records(set: &RecordSet) -> Result<Trainer, TrainError> {
        let model = Model::from_records(set)?;
        let mut v = Vec::new();
        for k in STATE_U64 {
            v.push(set.u64(&format!("train.{k}"))?);
        }
        let opt = |name: &str| -> Result<Option<f64>, TrainError> {
            Ok(set.get(name)?.as_f64s()?.first().copied())
        };
        let task = match set.text("train.task")? {
            [t] => t.parse().map_err(TrainError::Config)?,
            _ => return Err(TrainError::Config("bad task record".into())),
        };
        let config = TrainConfig {
            lr0: set.f64("train.lr0")?,
            lr_decay: set.f64("train.lr_decay")?,
            momentum: set.f64("train.momentum")?,
            batch_size: v[4] as usize,
            max_epochs: v[5] as usize,
            patience: v[6] as usize,
            seed: v[7],
            clip_norm: opt("train.clip_norm")?,
            task,
        };
        config.validate()?;
        let words = set.get("train.rng")?.as_u64s()?;
        if words.len() != 7 {
            return Err(TrainError::Config("bad rng record".into()));
        }
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_mut(8).zip(&words[..4]) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(words[4]);
        rng.set_word_pos(u128::from(words[5]) | (u128::from(words[6]) << 64));
        let state = TrainState {
            epoch: v[0] as usize,
            global_step: v[1],
            lr: set.f64("train.lr")?,
            best_score: opt("train.best_score")?,
            best_epoch: v[2] as usize,
            epochs_since_best: v[3] as usize,
            rng,
        };
        Ok(Trainer { model, config, state })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        write_bytes(path, &encode_records(&self.to_records()))
    }

    pub fn load(path: &Path) -> Result<Trainer, TrainError> {
        Trainer::from_records(&read_records(path)?)
    }
}

/// Zero or one float.
fn optional_f64(name: &str, v: Option<f64>) -> Record {
    let values: Vec<f64> = v.into_iter().collect();
    Record {
        name: name.to_string(),
        dims: vec![values.len() as u64],
        payload: Payload::F64(values),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), TrainError> {
    std::fs::write(path, bytes).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_records(path: &Path) -> Result<RecordSet, TrainError> {
    let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(RecordSet::new(decode_records(&bytes)?)?)
}

/// Loads just the model from a checkpoint written by [`Trainer::save`].
pub fn load_model(path: &Path) -> Result<Model, TrainError> {
    Ok(Model::from_records(&read_records(path)?)?)
}
