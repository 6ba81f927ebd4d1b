//! Greedy and beam decoding with per-step attention traces.

use std::cmp::Ordering;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{DecoderState, Encoded, IndexedExample, Mode, Model, ModelError, TARGET_EOS, TARGET_PAD, TARGET_SOS};
use crate::paths::Example;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error("prediction refers to context {index} but the example has {len}")]
    MismatchedExample { index: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Without EOS.
    pub subtokens: Vec<String>,
    /// Sum of the log-probabilities of every emitted token, EOS included.
    pub score: f64,
    /// Emitted tokens including EOS; `score / length` ranks beams.
    pub length: usize,
    /// Per decoding step, `(context index, weight)` sorted by descending
    /// weight. Empty steps for variants without attention.
    pub attention: Vec<Vec<(usize, f64)>>,
}

impl Prediction {
    pub fn normalized_score(&self) -> f64 {
        self.score / self.length.max(1) as f64
    }
}

fn allowed(id: usize) -> bool {
    id != TARGET_PAD && id != TARGET_SOS
}

fn sorted_trace(enc: &Encoded, alpha: &[f64]) -> Vec<(usize, f64)> {
    let mut t: Vec<(usize, f64)> = enc.selection.iter().copied().zip(alpha.iter().copied()).collect();
    t.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    t
}

fn encode(model: &Model, ex: &IndexedExample) -> Result<Encoded, ModelError> {
    let selection = model.select_contexts(ex.contexts.len(), None);
    model.encode_example(ex, &selection, &mut Mode::Infer)
}

#[derive(Clone)]
struct Hyp {
    ids: Vec<usize>,
    score: f64,
    state: DecoderState,
    attention: Vec<Vec<(usize, f64)>>,
}

impl Hyp {
    fn into_prediction(self, model: &Model) -> Prediction {
        let subtokens = self
            .ids
            .iter()
            .filter(|&&id| id != TARGET_EOS)
            .map(|&id| model.vocabs.target.token(id).to_string())
            .collect();
        Prediction {
            subtokens,
            score: self.score,
            length: self.ids.len(),
            attention: self.attention,
        }
    }
}

/// Top `width` whole names for the decoder-free variant.
fn name_predictions(model: &Model, enc: &Encoded, width: usize) -> Vec<Prediction> {
    let probs = model.name_distribution(enc);
    let mut ids: Vec<usize> = (0..probs.len()).filter(|&i| allowed(i) && i != TARGET_EOS).collect();
    ids.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    ids.truncate(width);
    ids.into_iter()
        .map(|id| Prediction {
            subtokens: model.vocabs.target.token(id).split('|').map(str::to_string).collect(),
            score: probs[id].ln(),
            length: 1,
            attention: vec![Vec::new()],
        })
        .collect()
}

/// Beam search over cumulative log-probability; finished hypotheses are
/// ranked by log-probability divided by length. Width 1 is greedy decoding.
pub fn beam_decode(model: &Model, ex: &IndexedExample, width: usize) -> Result<Vec<Prediction>, DecodeError> {
    if width == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    let enc = encode(model, ex)?;
    if !model.config.ablation.has_decoder() {
        return Ok(name_predictions(model, &enc, width));
    }
    let max_len = model.config.max_target_len;
    let mut live = vec![Hyp {
        ids: Vec::new(),
        score: 0.0,
        state: model.start_state(&enc),
        attention: Vec::new(),
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    for t in 0..=max_len {
        // (cumulative score, hypothesis, token)
        let mut cands = Vec::new();
        let mut outputs = Vec::new();
        for (hi, h) in live.iter().enumerate() {
            let prev = h.ids.last().copied().unwrap_or(TARGET_SOS);
            let step = model.decode_step(prev, &h.state, &enc)?;
            for (id, &p) in step.probs.iter().enumerate() {
                // the last step may only close the sequence
                if allowed(id) && (t < max_len || id == TARGET_EOS) {
                    cands.push((h.score + p.ln(), hi, id));
                }
            }
            outputs.push(step);
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(width);
        let mut next = Vec::new();
        for (score, hi, id) in cands {
            let mut h = live[hi].clone();
            h.ids.push(id);
            h.score = score;
            h.state = outputs[hi].state.clone();
            h.attention.push(sorted_trace(&enc, &outputs[hi].alpha));
            if id == TARGET_EOS {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
        if live.is_empty() || finished.len() >= width {
            break;
        }
    }
    let mut preds: Vec<Prediction> = finished.into_iter().map(|h| h.into_prediction(model)).collect();
    preds.sort_by(|a, b| b.normalized_score().partial_cmp(&a.normalized_score()).unwrap_or(Ordering::Equal));
    preds.truncate(width);
    Ok(preds)
}

/// Most probable token at every step until EOS or `max_target_len`
/// subtokens.
pub fn greedy_decode(model: &Model, ex: &IndexedExample) -> Result<Prediction, DecodeError> {
    let enc = encode(model, ex)?;
    if !model.config.ablation.has_decoder() {
        return Ok(name_predictions(model, &enc, 1).remove(0));
    }
    let max_len = model.config.max_target_len;
    let mut state = model.start_state(&enc);
    let mut prev = TARGET_SOS;
    let mut ids = Vec::new();
    let mut score = 0.0;
    let mut attention = Vec::new();
    for t in 0..=max_len {
        let step = model.decode_step(prev, &state, &enc)?;
        let id = if t == max_len {
            TARGET_EOS
        } else {
            // first maximum, so ties go to the lowest id as in the beam
            let mut best = TARGET_EOS;
            for (id, &p) in step.probs.iter().enumerate() {
                if allowed(id) && (p > step.probs[best] || (p == step.probs[best] && id < best)) {
                    best = id;
                }
            }
            best
        };
        score += step.probs[id].ln();
        attention.push(sorted_trace(&enc, &step.alpha));
        ids.push(id);
        if id == TARGET_EOS {
            break;
        }
        prev = id;
        state = step.state;
    }
    Ok(Hyp {
        ids,
        score,
        state,
        attention,
    }
    .into_prediction(model))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttendedContext {
    pub context: usize,
    pub weight: f64,
    /// `left,path,right` as in the dataset format.
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainStep {
    pub subtoken: String,
    pub contexts: Vec<AttendedContext>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub steps: Vec<ExplainStep>,
}

/// The `top_n` most attended contexts for each decoded subtoken.
pub fn explain(pred: &Prediction, ex: &Example, top_n: usize) -> Result<Explanation, DecodeError> {
    let mut steps = Vec::new();
    for (subtoken, trace) in pred.subtokens.iter().zip(&pred.attention) {
        let mut contexts = Vec::new();
        for &(i, w) in trace.iter().take(top_n) {
            let ctx = ex.contexts.get(i).ok_or(DecodeError::MismatchedExample {
                index: i,
                len: ex.contexts.len(),
            })?;
            contexts.push(AttendedContext {
                context: i,
                weight: w,
                rendered: ctx.to_string(),
            });
        }
        steps.push(ExplainStep {
            subtoken: subtoken.clone(),
            contexts,
        });
    }
    Ok(Explanation { steps })
}

impl Explanation {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, s) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "step {}: {}", t + 1, s.subtoken);
            if s.contexts.is_empty() {
                out.push_str("    (no attention)\n");
            }
            for c in &s.contexts {
                let _ = writeln!(out, "    {:.4}  #{}  {}", c.weight, c.context, c.rendered);
            }
        }
        out
    }
}
