//! The `pathseq` command line: preprocess, train, predict, evaluate,
//! ablate and synth.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, RunConfig};
use crate::corpus::{method_examples, source_files, split_examples, write_dataset, vocab_counts_text, CorpusStats, Splits};
use crate::decode::{beam_decode, explain, greedy_decode, Prediction};
use crate::eval::{ablation_report, dump_bleu, dump_f1, parse_dump, render_ablation, render_bleu, render_f1, DumpLine, EvalError};
use crate::minij::SourceUnit;
use crate::model::{Ablation, Model, Vocabs};
use crate::paths::{parse_dataset, Example};
use crate::synth::generate_sources;
use crate::train::{load_model, FitReport, Task, TrainError, Trainer};

pub const SEED_ENV: &str = "P2SQ_SEED";
const SOURCE_EXTENSIONS: &[&str] = &["mj", "java"];

#[derive(Debug, Parser)]
#[command(name = "pathseq", version, about = "Predict method names from AST paths")]
pub struct Cli {
    /// key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract path contexts from a source tree into dataset files.
    Preprocess {
        /// Directory of .mj/.java files; `train/`, `val/` and `test/`
        /// subdirectories are used as the splits when present.
        #[arg(long)]
        src: PathBuf,
        /// Output prefix: writes PREFIX.{train,val,test}.c2s and PREFIX.vocab.
        #[arg(long)]
        out: String,
    },
    /// Train on PREFIX.train.c2s, validating on PREFIX.val.c2s.
    Train {
        #[arg(long)]
        data: String,
        /// Best checkpoint; the latest state goes to OUT.last.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ablation: Option<String>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also write the per-epoch log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Predict names for source methods or dataset lines.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Source file or .c2s file; stdin when absent or `-`.
        input: Option<PathBuf>,
        /// Treat the input as dataset lines.
        #[arg(long)]
        c2s: bool,
        #[arg(long)]
        beam: Option<usize>,
        /// Print the N most attended contexts per decoded subtoken.
        #[arg(long, value_name = "N")]
        explain: Option<usize>,
    },
    /// Score a model on a dataset file, or score an existing prediction dump.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Existing prediction dump to score instead of decoding.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        /// Write the prediction dump here.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the metric report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write per-example attention traces here.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Train (or load) all seven configurations and print the ablation table.
    Ablate {
        #[arg(long)]
        data: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Use checkpoints already in OUT_DIR.
        #[arg(long)]
        skip_train: bool,
    },
    /// Write a synthetic MiniJ corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        held_out: usize,
    },
}

/// A failure with a short machine-readable kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> CliError {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "usage" | "config" => 2,
            "io" => 3,
            "data" | "parse" => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind, self.message.replace('\n', " "))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new("config", e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Io { .. } => "io",
            TrainError::Checkpoint(_) => "checkpoint",
            TrainError::Config(_) => "config",
            TrainError::Model(_) | TrainError::Decode(_) => "model",
            TrainError::Eval(_) => "eval",
            TrainError::EmptyDataset | TrainError::Divergence { .. } => "train",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::new("eval", e.to_string())
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_dataset(path: &Path) -> Result<Vec<Example>, CliError> {
    parse_dataset(&read_text(path)?).map_err(|e| CliError::new("data", format!("{}: {e}", path.display())))
}

fn split_path(prefix: &str, split: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{split}.c2s"))
}

/// Defaults, then the seed environment variable, the config file, `--set`
/// overrides and finally `--seed`.
pub fn resolve_config(cli: &Cli, env_seed: Option<&str>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(s) = env_seed {
        cfg.set("seed", s).map_err(|e| CliError::new("config", format!("{SEED_ENV}: {e}")))?;
    }
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    Ok(cfg)
}

/// Parses `args`, runs the command, and writes results to `out` and
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::new("help", e.to_string()),
        _ => CliError::new("usage", e.to_string().lines().next().unwrap_or("bad arguments").trim_start_matches("error: ").to_string()),
    })?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut cfg = resolve_config(&cli, env_seed.as_deref())?;
    match &cli.command {
        Command::Train { ablation: Some(a), .. } => cfg.set("ablation", a)?,
        Command::Predict { beam: Some(b), .. } => cfg.set("beam", &b.to_string())?,
        Command::Evaluate { task: Some(t), .. } => cfg.set("task", t)?,
        _ => {}
    }
    cfg.validate()?;
    let _ = writeln!(err, "# resolved config");
    for line in cfg.render().lines() {
        let _ = writeln!(err, "#   {line}");
    }
    match cli.command {
        Command::Preprocess { src, out: prefix } => preprocess(&cfg, &src, &prefix, out, err),
        Command::Train {
            data,
            out: ckpt,
            resume,
            log,
            ..
        } => train(&cfg, &data, &ckpt, resume.as_deref(), log.as_deref(), out, err).map(|_| ()),
        Command::Predict {
            model,
            input,
            c2s,
            explain,
            ..
        } => predict(&cfg, &model, input.as_deref(), c2s, explain, out, err),
        Command::Evaluate {
            model,
            data,
            predictions,
            dump,
            report,
            traces,
            ..
        } => evaluate(&cfg, model.as_deref(), data.as_deref(), predictions.as_deref(), dump.as_deref(), report.as_deref(), traces.as_deref(), out),
        Command::Ablate { data, out_dir, skip_train } => ablate(&cfg, &data, &out_dir, skip_train, out, err),
        Command::Synth { out: dir, count, held_out } => synth(&cfg, &dir, count, held_out, out),
    }
}

fn examples_from_files(files: &[PathBuf], cfg: &RunConfig, err: &mut dyn Write) -> Vec<Example> {
    let cap = (cfg.max_contexts > 0).then_some(cfg.max_contexts);
    let mut all = Vec::new();
    for f in files {
        let src = match SourceUnit::read(f) {
            Ok(s) => s,
            Err(e) => {
                let _ = writeln!(err, "skip: {}: {e}", f.display());
                continue;
            }
        };
        let (exs, skipped) = method_examples(&src, &cfg.extraction, cap);
        for s in skipped {
            let _ = writeln!(err, "skip: {s}");
        }
        all.extend(exs);
    }
    all
}

fn preprocess(cfg: &RunConfig, src: &Path, prefix: &str, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if !src.is_dir() {
        return Err(CliError::new("io", format!("{}: not a directory", src.display())));
    }
    let sub = |name: &str| src.join(name);
    let has_splits = ["train", "val", "test"].iter().any(|s| sub(s).is_dir());
    let files = |dir: &Path| -> Result<Vec<PathBuf>, CliError> {
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        source_files(dir, SOURCE_EXTENSIONS).map_err(|e| io_err(dir, e))
    };
    let splits = if has_splits {
        Splits {
            train: examples_from_files(&files(&sub("train"))?, cfg, err),
            val: examples_from_files(&files(&sub("val"))?, cfg, err),
            test: examples_from_files(&files(&sub("test"))?, cfg, err),
        }
    } else {
        let all = examples_from_files(&files(src)?, cfg, err);
        split_examples(all, cfg.val_fraction, cfg.test_fraction, cfg.train.seed)
    };
    if splits.train.is_empty() && splits.val.is_empty() && splits.test.is_empty() {
        return Err(CliError::new("data", format!("no parsable methods under {}", src.display())));
    }
    for (name, exs) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let path = split_path(prefix, name);
        write_dataset(&path, exs).map_err(|e| io_err(&path, e))?;
        let _ = writeln!(out, "{name}\t{}", CorpusStats::of(exs));
    }
    let vocab = PathBuf::from(format!("{prefix}.vocab"));
    write_text(&vocab, &vocab_counts_text(&splits.train))
}

fn read_optional_dataset(path: &Path) -> Result<Vec<Example>, CliError> {
    if path.exists() {
        read_dataset(path)
    } else {
        Ok(Vec::new())
    }
}

fn last_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".last");
    PathBuf::from(s)
}

/// A fresh model for `train`, initialized from the run seed.
pub fn init_model(cfg: &RunConfig, train: &[Example]) -> Result<Model, CliError> {
    let m = &cfg.model;
    let vocabs = Vocabs::build(train, m.ablation, m.max_source_vocab, m.max_target_vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(1);
    Model::new(m.clone(), vocabs, &mut rng).map_err(|e| CliError::new("config", e.to_string()))
}

fn train(
    cfg: &RunConfig,
    prefix: &str,
    ckpt: &Path,
    resume: Option<&Path>,
    log: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<FitReport, CliError> {
    let train_path = split_path(prefix, "train");
    if !train_path.exists() {
        return Err(CliError::new("io", format!("{}: training set not found", train_path.display())));
    }
    let train_set = read_dataset(&train_path)?;
    if train_set.is_empty() {
        return Err(CliError::new("data", format!("{}: no examples", train_path.display())));
    }
    let val = read_optional_dataset(&split_path(prefix, "val"))?;
    let mut trainer = match resume {
        Some(p) => {
            let mut t = Trainer::load(p)?;
            t.config.max_epochs = cfg.train.max_epochs;
            t.config.patience = cfg.train.patience;
            t
        }
        None => Trainer::new(init_model(cfg, &train_set)?, cfg.train.clone())?,
    };
    let mut lines = Vec::new();
    let report = trainer.fit(&train_set, &val, Some(ckpt), Some(&last_path(ckpt)), &mut lines)?;
    let text = String::from_utf8_lossy(&lines).into_owned();
    let _ = err.write_all(text.as_bytes());
    if let Some(p) = log {
        write_text(p, &text)?;
    }
    let best = report.best_score.map_or("-".to_string(), |v| format!("{v:.6}"));
    let _ = writeln!(
        out,
        "trained {} epochs; best epoch {} (val {best}); checkpoint {}",
        report.epochs.len(),
        report.best_epoch,
        ckpt.display()
    );
    Ok(report)
}

fn decode_one(model: &Model, ex: &Example, beam: usize) -> Result<Vec<Prediction>, TrainError> {
    let ix = model.index_example(ex)?;
    if beam <= 1 {
        Ok(vec![greedy_decode(model, &ix)?])
    } else {
        Ok(beam_decode(model, &ix, beam)?)
    }
}

fn predict(
    cfg: &RunConfig,
    model_path: &Path,
    input: Option<&Path>,
    c2s: bool,
    explain_n: Option<usize>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let input = input.filter(|p| p.as_os_str() != "-");
    let (text, origin) = match input {
        Some(p) => (read_text(p)?, p.display().to_string()),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| CliError::new("io", format!("stdin: {e}")))?;
            (s, "<stdin>".to_string())
        }
    };
    let as_c2s = c2s || input.is_some_and(|p| p.extension().is_some_and(|e| e == "c2s"));
    let mut failures = 0usize;
    let mut examples = Vec::new();
    if as_c2s {
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match Example::parse_line(line, i + 1) {
                Ok(ex) => examples.push(ex),
                Err(e) => {
                    failures += 1;
                    let _ = writeln!(err, "error[parse]: {origin}: {e}");
                }
            }
        }
    } else {
        let unit = SourceUnit { text, origin };
        let (exs, skipped) = method_examples(&unit, &cfg.extraction, None);
        for s in skipped {
            failures += 1;
            let _ = writeln!(err, "error[parse]: {s}");
        }
        examples = exs;
    }
    for (i, ex) in examples.iter().enumerate() {
        match decode_one(&model, ex, cfg.beam) {
            Ok(preds) => {
                for p in &preds {
                    let _ = writeln!(out, "{i}\t{}\t{:.6}", p.subtokens.join(" "), p.score);
                }
                if let Some(n) = explain_n {
                    let e = explain(&preds[0], ex, n).map_err(|e| CliError::new("model", e.to_string()))?;
                    let _ = write!(out, "{}", e.to_text());
                }
            }
            Err(e) => {
                failures += 1;
                let _ = writeln!(err, "error[model]: example {i}: {e}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::new("parse", format!("{failures} input(s) could not be predicted")));
    }
    Ok(())
}

fn metric_report(dump: &[DumpLine], task: Task) -> Result<String, CliError> {
    Ok(match task {
        Task::F1 => render_f1(&dump_f1(dump)?),
        Task::Bleu => render_bleu(&dump_bleu(dump)?),
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &RunConfig,
    model_path: Option<&Path>,
    data: Option<&Path>,
    predictions: Option<&Path>,
    dump_path: Option<&Path>,
    report_path: Option<&Path>,
    traces: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let dump = if let Some(p) = predictions {
        parse_dump(&read_text(p)?).map_err(|e| CliError::new("data", format!("{}: {e}", p.display())))?
    } else {
        let (Some(mp), Some(dp)) = (model_path, data) else {
            return Err(CliError::new("usage", "evaluate needs --model and --data, or --predictions"));
        };
        let model = load_model(mp)?;
        let exs = read_dataset(dp)?;
        let mut dump = Vec::with_capacity(exs.len());
        let mut trace_text = String::new();
        for (i, ex) in exs.iter().enumerate() {
            let preds = decode_one(&model, ex, cfg.beam)?;
            let best = &preds[0];
            if traces.is_some() {
                let e = explain(best, ex, 5).map_err(|e| CliError::new("model", e.to_string()))?;
                trace_text.push_str(&format!("example {i}\n{}", e.to_text()));
            }
            dump.push(DumpLine {
                gold: ex.target.clone(),
                predicted: best.subtokens.clone(),
                score: best.score,
            });
        }
        if let Some(p) = dump_path {
            write_text(p, &dump.iter().map(|d| d.to_line() + "\n").collect::<String>())?;
        }
        if let Some(p) = traces {
            write_text(p, &trace_text)?;
        }
        dump
    };
    let report = metric_report(&dump, cfg.train.task)?;
    if let Some(p) = report_path {
        write_text(p, &report)?;
    }
    let _ = write!(out, "{report}");
    Ok(())
}

fn ablate(cfg: &RunConfig, prefix: &str, dir: &Path, skip_train: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let test_path = split_path(prefix, "test");
    let mut test = read_optional_dataset(&test_path)?;
    if test.is_empty() {
        test = read_optional_dataset(&split_path(prefix, "val"))?;
    }
    if test.is_empty() {
        test = read_dataset(&split_path(prefix, "train"))?;
    }
    let mut results = Vec::new();
    for a in Ablation::ALL {
        let ckpt = dir.join(format!("{}.ckpt", a.name()));
        if !skip_train {
            let mut c = cfg.clone();
            c.model.ablation = a;
            let _ = writeln!(err, "# training {}", a.name());
            train(&c, prefix, &ckpt, None, None, &mut io::sink(), err)?;
        }
        if !ckpt.exists() {
            return Err(EvalError::MissingVariant(a.name().to_string()).into());
        }
        let model = load_model(&ckpt)?;
        if model.config.ablation != a {
            return Err(CliError::new("checkpoint", format!("{} holds variant {}", ckpt.display(), model.config.ablation)));
        }
        let mut dump = Vec::new();
        for ex in &test {
            let p = decode_one(&model, ex, 1)?.remove(0);
            dump.push(DumpLine {
                gold: ex.target.clone(),
                predicted: p.subtokens,
                score: p.score,
            });
        }
        results.push((a, dump_f1(&dump)?));
    }
    let table = render_ablation(&ablation_report(&results)?);
    write_text(&dir.join("ablation.tsv"), &table)?;
    let _ = write!(out, "{table}");
    Ok(())
}

fn synth(cfg: &RunConfig, dir: &Path, count: usize, held_out: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let max = crate::synth::all_names().len();
    if count > max || held_out > count {
        return Err(CliError::new("usage", format!("need held_out <= count <= {max}")));
    }
    let src = generate_sources(count, held_out, cfg.train.seed);
    for (split, texts) in [("train", &src.train), ("test", &src.test)] {
        if texts.is_empty() {
            continue;
        }
        let d = dir.join(split);
        fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        for (i, t) in texts.iter().enumerate() {
            write_text(&d.join(format!("m{i:05}.mj")), &format!("{t}\n"))?;
        }
    }
    let _ = writeln!(out, "wrote {} training and {} held-out methods to {}", src.train.len(), src.test.len(), dir.display());
    Ok(())
}
