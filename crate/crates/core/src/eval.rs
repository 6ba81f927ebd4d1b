//! Subtoken precision/recall/F1, smoothed corpus BLEU, prediction dumps and
//! the ablation table.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::Ablation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("candidate {0} has no reference")]
    NoReference(usize),
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("no result for variant {0}")]
    MissingVariant(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Prf {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

fn counts<S: AsRef<str>>(items: &[S]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for s in items {
        *m.entry(s.as_ref().to_lowercase()).or_insert(0) += 1;
    }
    m
}

/// (matches, |pred|, |gold|) under multiset matching, case-insensitive.
fn match_counts<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T]) -> (usize, usize, usize) {
    let g = counts(gold);
    let m = counts(pred)
        .iter()
        .map(|(t, &c)| c.min(g.get(t).copied().unwrap_or(0)))
        .sum();
    (m, pred.len(), gold.len())
}

fn prf_from_counts(m: usize, np: usize, ng: usize) -> Prf {
    if np == 0 && ng == 0 {
        return Prf::from_pr(1.0, 1.0);
    }
    let p = if np == 0 { 0.0 } else { m as f64 / np as f64 };
    let r = if ng == 0 { 0.0 } else { m as f64 / ng as f64 };
    Prf::from_pr(p, r)
}

/// Precision, recall and F1 of one prediction; order is ignored and
/// repeated subtokens count as often as they occur in both.
pub fn subtoken_f1<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T]) -> Prf {
    let (m, np, ng) = match_counts(pred, gold);
    prf_from_counts(m, np, ng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    /// From summed match and length counts over the corpus.
    pub micro: Prf,
    /// Mean of the per-example values.
    pub macro_avg: Prf,
    pub exact_match: f64,
    pub examples: usize,
}

/// `pairs` are `(predicted, gold)`.
pub fn corpus_f1<S: AsRef<str>, T: AsRef<str>>(pairs: &[(Vec<S>, Vec<T>)]) -> Result<F1Report, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut m, mut np, mut ng) = (0, 0, 0);
    let mut sum = Prf::default();
    let mut exact = 0usize;
    for (pred, gold) in pairs {
        let (a, b, c) = match_counts(pred, gold);
        m += a;
        np += b;
        ng += c;
        let one = prf_from_counts(a, b, c);
        sum.precision += one.precision;
        sum.recall += one.recall;
        sum.f1 += one.f1;
        let same = pred.len() == gold.len()
            && pred.iter().zip(gold).all(|(p, g)| p.as_ref().eq_ignore_ascii_case(g.as_ref()));
        exact += usize::from(same);
    }
    let n = pairs.len() as f64;
    Ok(F1Report {
        micro: prf_from_counts(m, np, ng),
        macro_avg: Prf {
            precision: sum.precision / n,
            recall: sum.recall / n,
            f1: sum.f1 / n,
        },
        exact_match: exact as f64 / n,
        examples: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// In `[0, 100]`.
    pub bleu: f64,
    /// Smoothed modified precisions for n = 1..4.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

/// Lowercased whitespace tokens.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU-4. Matches are clipped by the largest count in any single
/// reference; counts are summed over the corpus; for n >= 2 one is added to
/// both the match count and the n-gram total. The brevity penalty uses, per
/// candidate, the reference length closest to it (the shorter on ties).
pub fn smoothed_bleu<S: AsRef<str>, T: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<Vec<T>>]) -> Result<BleuReport, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::Empty);
    }
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(EvalError::NoReference(i));
        }
        c_len += cand.len();
        r_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .expect("non-empty");
        for n in 1..=4 {
            let cand_grams = ngrams(cand, n);
            let ref_grams: Vec<_> = refs.iter().map(|r| ngrams(r, n)).collect();
            for (g, &c) in &cand_grams {
                let max_ref = ref_grams.iter().map(|m| m.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                matched[n - 1] += c.min(max_ref);
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    let mut precisions = [0.0; 4];
    for n in 0..4 {
        precisions[n] = if n == 0 {
            if total[0] == 0 {
                0.0
            } else {
                matched[0] as f64 / total[0] as f64
            }
        } else {
            (matched[n] + 1) as f64 / (total[n] + 1) as f64
        };
    }
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let bleu = if precisions[0] == 0.0 {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        candidate_length: c_len,
        reference_length: r_len,
    })
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpLine {
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub score: f64,
}

impl DumpLine {
    /// `gold subtokens | predicted subtokens | score`
    pub fn to_line(&self) -> String {
        format!("{} | {} | {:.6}", self.gold.join(" "), self.predicted.join(" "), self.score)
    }
}

pub fn parse_dump(text: &str) -> Result<Vec<DumpLine>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Malformed { line: i + 1, message };
        let parts: Vec<&str> = line.split(" | ").collect();
        let [gold, pred, score] = parts[..] else {
            return Err(bad(format!("expected 3 fields separated by \" | \", got {}", parts.len())));
        };
        let score = score.trim().parse::<f64>().map_err(|e| bad(format!("bad score {score:?}: {e}")))?;
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        out.push(DumpLine {
            gold: split(gold),
            predicted: split(pred),
            score,
        });
    }
    Ok(out)
}

pub fn dump_f1(lines: &[DumpLine]) -> Result<F1Report, EvalError> {
    let pairs: Vec<(Vec<String>, Vec<String>)> = lines.iter().map(|l| (l.predicted.clone(), l.gold.clone())).collect();
    corpus_f1(&pairs)
}

pub fn dump_bleu(lines: &[DumpLine]) -> Result<BleuReport, EvalError> {
    let cands: Vec<Vec<String>> = lines.iter().map(|l| l.predicted.iter().map(|s| s.to_lowercase()).collect()).collect();
    let refs: Vec<Vec<Vec<String>>> = lines.iter().map(|l| vec![l.gold.iter().map(|s| s.to_lowercase()).collect()]).collect();
    smoothed_bleu(&cands, &refs)
}

pub fn render_f1(report: &F1Report) -> String {
    format!(
        "metric\tprecision\trecall\tf1\nmicro\t{:.4}\t{:.4}\t{:.4}\nmacro\t{:.4}\t{:.4}\t{:.4}\nexact_match\t{:.4}\nexamples\t{}\n",
        report.micro.precision,
        report.micro.recall,
        report.micro.f1,
        report.macro_avg.precision,
        report.macro_avg.recall,
        report.macro_avg.f1,
        report.exact_match,
        report.examples
    )
}

pub fn render_bleu(report: &BleuReport) -> String {
    let p = report.precisions;
    format!(
        "bleu\t{:.4}\np1..p4\t{:.4}\t{:.4}\t{:.4}\t{:.4}\nbrevity_penalty\t{:.4}\ncandidate_length\t{}\nreference_length\t{}\n",
        report.bleu, p[0], p[1], p[2], p[3], report.brevity_penalty, report.candidate_length, report.reference_length
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Ablation,
    pub scores: Prf,
    /// F1 minus the full model's F1, in points.
    pub delta_f1: f64,
}

/// One row per configuration in canonical order; every one of the seven
/// configurations must be present.
pub fn ablation_report(results: &[(Ablation, F1Report)]) -> Result<Vec<AblationRow>, EvalError> {
    let find = |a: Ablation| {
        results
            .iter()
            .find(|(v, _)| *v == a)
            .map(|(_, r)| r.micro)
            .ok_or_else(|| EvalError::MissingVariant(a.name().to_string()))
    };
    let base = find(Ablation::Full)?;
    Ablation::ALL
        .iter()
        .map(|&a| {
            let scores = find(a)?;
            Ok(AblationRow {
                variant: a,
                scores,
                delta_f1: 100.0 * (scores.f1 - base.f1),
            })
        })
        .collect()
}

/// Tab-separated table with percentages.
pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant\tprecision\trecall\tf1\tdelta_f1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:+.2}",
            r.variant.label(),
            100.0 * r.scores.precision,
            100.0 * r.scores.recall,
            100.0 * r.scores.f1,
            r.delta_f1
        );
    }
    out
}
