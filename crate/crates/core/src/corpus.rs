//! Source files to datasets: method splitting, name masking, path
//! extraction, train/val/test splitting and corpus statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::minij::{extract_target_name, parse_method, split_methods, SourceUnit};
use crate::paths::{build_example, sample_indices, Example, ExtractionConfig};

/// A method (or file) that produced no example, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub origin: String,
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for Skipped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.origin, self.line, self.reason)
    }
}

/// One example per method found in `src`. Methods that fail to parse or
/// yield no path are reported instead. At most `max_contexts` contexts are
/// kept per example (a seeded uniform sample).
pub fn method_examples(src: &SourceUnit, cfg: &ExtractionConfig, max_contexts: Option<usize>) -> (Vec<Example>, Vec<Skipped>) {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let skip = |line: usize, reason: String| Skipped {
        origin: src.origin.clone(),
        line,
        reason,
    };
    let chunks = match split_methods(src) {
        Ok(c) => c,
        Err(e) => {
            skipped.push(skip(e.line, e.to_string()));
            return (examples, skipped);
        }
    };
    if chunks.is_empty() {
        skipped.push(skip(1, "no method found".into()));
    }
    for chunk in chunks {
        let unit = SourceUnit {
            text: chunk.text,
            origin: src.origin.clone(),
        };
        let result = parse_method(&unit)
            .map_err(|e| format!("line {}: {}", e.line + chunk.line - 1, e.message))
            .and_then(|ast| extract_target_name(&ast).map_err(|e| e.to_string()))
            .and_then(|(masked, name)| build_example(&masked, &name, cfg).map_err(|e| e.to_string()));
        match result {
            Ok(mut ex) if !ex.contexts.is_empty() => {
                if let Some(cap) = max_contexts {
                    if ex.contexts.len() > cap {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        rng.set_stream(examples.len() as u64);
                        let keep = sample_indices(ex.contexts.len(), cap, &mut rng);
                        ex.contexts = keep.into_iter().map(|i| ex.contexts[i].clone()).collect();
                    }
                }
                examples.push(ex)
            }
            Ok(_) => skipped.push(skip(chunk.line, "method has no path contexts".into())),
            Err(reason) => skipped.push(skip(chunk.line, reason)),
        }
    }
    (examples, skipped)
}

/// Source files under `dir` with the given extensions, sorted by path.
pub fn source_files(dir: &Path, extensions: &[&str]) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if entry.file_type().is_file() && extensions.contains(&ext) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Seeded shuffle, then the first `val` and `test` fractions become the
/// validation and test sets.
pub fn split_examples(mut examples: Vec<Example>, val: f64, test: f64, seed: u64) -> Splits {
    examples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = examples.len();
    let n_val = (n as f64 * val).round() as usize;
    let n_test = ((n as f64 * test).round() as usize).min(n - n_val.min(n));
    let n_val = n_val.min(n);
    let train = examples.split_off(n_val + n_test);
    let test_set = examples.split_off(n_val);
    Splits {
        train,
        val: examples,
        test: test_set,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub examples: usize,
    pub avg_paths: f64,
    pub avg_target_len: f64,
}

impl CorpusStats {
    pub fn of(examples: &[Example]) -> CorpusStats {
        let n = examples.len().max(1) as f64;
        CorpusStats {
            examples: examples.len(),
            avg_paths: examples.iter().map(|e| e.contexts.len()).sum::<usize>() as f64 / n,
            avg_target_len: examples.iter().map(|e| e.target.len()).sum::<usize>() as f64 / n,
        }
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "examples={} avg_paths={:.2} avg_target_len={:.2}",
            self.examples, self.avg_paths, self.avg_target_len
        )
    }
}

pub fn write_dataset(path: &Path, examples: &[Example]) -> std::io::Result<()> {
    let mut text = String::new();
    for ex in examples {
        text.push_str(&ex.to_line());
        text.push('\n');
    }
    std::fs::write(path, text)
}

/// Subtoken and path-symbol counts of a dataset, one `kind\titem\tcount`
/// line each (kinds `node`, `source`, `target`), most frequent first.
pub fn vocab_counts_text(examples: &[Example]) -> String {
    let mut nodes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut source: BTreeMap<&str, usize> = BTreeMap::new();
    let mut target: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in examples {
        for c in &ex.contexts {
            for s in &c.path {
                *nodes.entry(s).or_insert(0) += 1;
            }
            for s in c.left.iter().chain(&c.right) {
                *source.entry(s).or_insert(0) += 1;
            }
        }
        for t in &ex.target {
            *target.entry(t).or_insert(0) += 1;
        }
    }
    let mut out = String::new();
    let mut emit = |kind: &str, counts: Vec<(&str, usize)>| {
        let mut counts = counts;
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (item, c) in counts {
            out.push_str(&format!("{kind}\t{item}\t{c}\n"));
        }
    };
    emit("node", nodes.into_iter().collect());
    emit("source", source.into_iter().collect());
    emit("target", target.into_iter().collect());
    out
}
