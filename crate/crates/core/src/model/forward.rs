use rand::RngCore;

use crate::numerics::{
    axpy, bilstm_backward, bilstm_forward, dot, dropout_mask, mat_vec_acc, outer_acc, softmax_in_place, vec_mat_acc,
    BiLstmTrace, LstmCache, Parameter,
};
use crate::paths::{sample_indices, Example};

use super::vocab::{joined, TARGET_EOS, TARGET_SOS};
use super::{Model, ModelError};

/// Training mode carries the rng that drives dropout masks.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Infer,
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut dyn RngCore> {
        match self {
            Mode::Train(r) => Some(&mut **r),
            Mode::Infer => None,
        }
    }

    fn training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// A path context as vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndexedContext {
    pub left: Vec<usize>,
    pub path: Vec<usize>,
    pub right: Vec<usize>,
}

/// An example as vocabulary ids. `target` excludes EOS and is truncated to
/// `max_target_len`; without a decoder it is the single whole-name id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedExample {
    pub target: Vec<usize>,
    pub contexts: Vec<IndexedContext>,
}

/// Forward values of one path context kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ContextRecord {
    context: usize,
    trace: Option<BiLstmTrace>,
    /// Concatenated input after dropout.
    x: Vec<f64>,
    mask: Option<Vec<f64>>,
}

/// Combined representations of the selected contexts and the start state.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Indices into the example's contexts, one per row of `z`.
    pub selection: Vec<usize>,
    pub z: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub h0: Vec<f64>,
    records: Vec<ContextRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepRecord {
    prev: usize,
    lstm: LstmCache,
    /// `h_t W_a`
    query: Vec<f64>,
    /// `[c_t; h_t]`
    hc: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    pub state: DecoderState,
    /// Attention over the rows of `z`; empty without attention.
    pub alpha: Vec<f64>,
    record: StepRecord,
}

/// A teacher-forced forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    encoded: Encoded,
    steps: Vec<StepOutput>,
    /// Probabilities and gold id per decoding step (one step without a
    /// decoder).
    outputs: Vec<(Vec<f64>, usize)>,
    pub loss: f64,
}

impl ForwardRecord {
    pub fn encoded(&self) -> &Encoded {
        &self.encoded
    }

    pub fn step_count(&self) -> usize {
        self.outputs.len()
    }
}

fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

fn embedding_sum(e: &Parameter, ids: &[usize], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for &id in ids {
        axpy(1.0, e.value().row(id), &mut out);
    }
    out
}

fn add_to_rows(e: &mut Parameter, ids: &[usize], d: &[f64]) {
    let width = d.len();
    let grad = e.grad_mut();
    for &id in ids {
        axpy(1.0, d, &mut grad[id * width..(id + 1) * width]);
    }
}

impl Model {
    /// Maps an example onto vocabulary ids under this model's ablation.
    pub fn index_example(&self, ex: &Example) -> Result<IndexedExample, ModelError> {
        if ex.contexts.is_empty() {
            return Err(ModelError::EmptyContexts);
        }
        if ex.target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let a = self.config.ablation;
        let v = &self.vocabs;
        let token = |t: &[String]| -> Vec<usize> {
            if a.splits_tokens() {
                t.iter().map(|s| v.source.id(s)).collect()
            } else {
                vec![v.source.id(&joined(t))]
            }
        };
        let target = if a.has_decoder() {
            ex.target
                .iter()
                .take(self.config.max_target_len)
                .map(|s| v.target.id(s))
                .collect()
        } else {
            vec![v.target.id(&joined(&ex.target))]
        };
        let contexts = ex
            .contexts
            .iter()
            .map(|c| IndexedContext {
                left: token(&c.left),
                path: c.path.iter().map(|s| v.nodes.id(s)).collect(),
                right: token(&c.right),
            })
            .collect();
        Ok(IndexedExample { target, contexts })
    }

    /// Which contexts an example is encoded with: a fresh uniform sample of
    /// `k` when an rng is given, otherwise the first `k` in stored order.
    pub fn select_contexts(&self, n: usize, rng: Option<&mut dyn RngCore>) -> Vec<usize> {
        let k = self.config.k;
        match rng {
            Some(r) => sample_indices(n, k, r),
            None => (0..n.min(k)).collect(),
        }
    }

    /// Sum of the (sub)token embeddings. Panics if tokens are ablated.
    pub fn encode_token(&self, ids: &[usize]) -> Vec<f64> {
        let e = self.params.e_source.as_ref().expect("model has token embeddings");
        embedding_sum(e, ids, self.config.d_tokens)
    }

    fn encode_context(&self, index: usize, ctx: &IndexedContext, mode: &mut Mode) -> Result<(ContextRecord, Vec<f64>), ModelError> {
        let cfg = &self.config;
        let p = &self.params;
        let mut x = Vec::with_capacity(cfg.input_width());
        let mut trace = None;
        if let (Some(e), Some(fwd), Some(bwd)) = (&p.e_nodes, &p.path_fwd, &p.path_bwd) {
            let rate = cfg.recurrent_dropout;
            let training = mode.training();
            let (mf, mb) = match mode.rng() {
                Some(r) => (
                    dropout_mask(cfg.d_path, rate, r, training),
                    dropout_mask(cfg.d_path, rate, r, training),
                ),
                None => (None, None),
            };
            let seq: Vec<&[f64]> = ctx.path.iter().map(|&id| e.value().row(id)).collect();
            let t = bilstm_forward(fwd, bwd, &seq, mf.as_deref(), mb.as_deref())?;
            x.extend_from_slice(&t.output);
            trace = Some(t);
        }
        if p.e_source.is_some() {
            x.extend(self.encode_token(&ctx.left));
            x.extend(self.encode_token(&ctx.right));
        }
        let training = mode.training();
        let mask = match mode.rng() {
            Some(r) => dropout_mask(x.len(), cfg.input_dropout, r, training),
            None => None,
        };
        if let Some(m) = &mask {
            x.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
        }
        let mut z = vec![0.0; cfg.d_hidden];
        vec_mat_acc(&x, p.w_in.value().data(), cfg.d_hidden, &mut z);
        tanh_in_place(&mut z);
        debug_assert!(z.iter().all(|v| v.abs() <= 1.0));
        Ok((
            ContextRecord {
                context: index,
                trace,
                x,
                mask,
            },
            z,
        ))
    }

    /// `z` for one context.
    pub fn encode_path_context(&self, ctx: &IndexedContext, mode: &mut Mode) -> Result<Vec<f64>, ModelError> {
        Ok(self.encode_context(0, ctx, mode)?.1)
    }

    /// Encodes the selected contexts and derives the decoder start state.
    ///
    /// Contexts are processed sorted by content, so the result does not
    /// depend on the order of `selection` or of the example's contexts.
    pub fn encode_example(&self, ex: &IndexedExample, selection: &[usize], mode: &mut Mode) -> Result<Encoded, ModelError> {
        if selection.is_empty() {
            return Err(ModelError::EmptyContexts);
        }
        if let Some(&bad) = selection.iter().find(|&&i| i >= ex.contexts.len()) {
            return Err(ModelError::Config(format!(
                "context index {bad} out of range for {} contexts",
                ex.contexts.len()
            )));
        }
        let mut order = selection.to_vec();
        order.sort_by(|&a, &b| ex.contexts[a].cmp(&ex.contexts[b]));
        let mut records = Vec::with_capacity(order.len());
        let mut z = Vec::with_capacity(order.len());
        for &i in &order {
            let (r, zi) = self.encode_context(i, &ex.contexts[i], mode)?;
            records.push(r);
            z.push(zi);
        }
        let mut mean = vec![0.0; self.config.d_hidden];
        for zi in &z {
            axpy(1.0, zi, &mut mean);
        }
        let inv = 1.0 / z.len() as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        let h0 = match &self.params.w_bridge {
            Some(w) => {
                let mut h = vec![0.0; self.config.d_decoder];
                vec_mat_acc(&mean, w.value().data(), self.config.d_decoder, &mut h);
                h
            }
            None => mean.clone(),
        };
        Ok(Encoded {
            selection: order,
            z,
            mean,
            h0,
            records,
        })
    }

    /// Bilinear attention of `h` over the rows of `z`; rows whose mask entry
    /// is false get zero weight.
    pub fn attention_step(&self, h: &[f64], z: &[Vec<f64>], mask: Option<&[bool]>) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let w_a = self.params.w_a.as_ref().ok_or(ModelError::Config("model has no attention".into()))?;
        let (alpha, c, _) = attend(w_a, self.config.d_hidden, h, z, mask)?;
        Ok((alpha, c))
    }

    pub fn start_state(&self, enc: &Encoded) -> DecoderState {
        DecoderState {
            h: enc.h0.clone(),
            c: vec![0.0; self.config.d_decoder],
        }
    }

    /// One decoder step from `prev` (SOS at the first step).
    pub fn decode_step(&self, prev: usize, state: &DecoderState, enc: &Encoded) -> Result<StepOutput, ModelError> {
        let cfg = &self.config;
        let p = &self.params;
        let (Some(dec), Some(e_t), Some(w_c)) = (&p.decoder, &p.e_target, &p.w_c) else {
            return Err(ModelError::Config("model has no decoder".into()));
        };
        let lstm = dec.forward(e_t.value().row(prev), &state.h, &state.c, None);
        let (alpha, ctx, query) = match &p.w_a {
            Some(w_a) => attend(w_a, cfg.d_hidden, &lstm.h, &enc.z, None)?,
            None => (Vec::new(), vec![0.0; cfg.d_hidden], Vec::new()),
        };
        let mut hc = ctx;
        hc.extend_from_slice(&lstm.h);
        let mut out = vec![0.0; cfg.d_decoder];
        vec_mat_acc(&hc, w_c.value().data(), cfg.d_decoder, &mut out);
        tanh_in_place(&mut out);
        let mut probs = vec![0.0; self.vocabs.target.len()];
        vec_mat_acc(&out, p.w_s.value().data(), probs.len(), &mut probs);
        softmax_in_place(&mut probs);
        Ok(StepOutput {
            probs,
            state: DecoderState {
                h: lstm.h.clone(),
                c: lstm.c.clone(),
            },
            alpha,
            record: StepRecord {
                prev,
                lstm,
                query,
                hc,
                out,
            },
        })
    }

    /// Whole-name distribution of the decoder-free variant.
    pub fn name_distribution(&self, enc: &Encoded) -> Vec<f64> {
        let mut probs = vec![0.0; self.vocabs.target.len()];
        vec_mat_acc(&enc.h0, self.params.w_s.value().data(), probs.len(), &mut probs);
        softmax_in_place(&mut probs);
        probs
    }

    /// Teacher-forced pass over `selection`; the loss is the mean
    /// cross-entropy over the target steps plus EOS.
    pub fn forward(&self, ex: &IndexedExample, selection: &[usize], mode: &mut Mode) -> Result<ForwardRecord, ModelError> {
        if ex.target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let encoded = self.encode_example(ex, selection, mode)?;
        let mut steps = Vec::new();
        let mut outputs = Vec::new();
        if self.config.ablation.has_decoder() {
            let mut state = self.start_state(&encoded);
            let mut prev = TARGET_SOS;
            for &gold in ex.target.iter().chain(std::iter::once(&TARGET_EOS)) {
                let step = self.decode_step(prev, &state, &encoded)?;
                state = step.state.clone();
                outputs.push((step.probs.clone(), gold));
                steps.push(step);
                prev = gold;
            }
        } else {
            outputs.push((self.name_distribution(&encoded), ex.target[0]));
        }
        let loss = outputs.iter().map(|(p, g)| -p[*g].ln()).sum::<f64>() / outputs.len() as f64;
        Ok(ForwardRecord {
            encoded,
            steps,
            outputs,
            loss,
        })
    }

    pub fn forward_loss(&self, ex: &IndexedExample, selection: &[usize], mode: &mut Mode) -> Result<f64, ModelError> {
        Ok(self.forward(ex, selection, mode)?.loss)
    }

    /// Accumulates `scale · ∂loss/∂θ` into every parameter gradient.
    pub fn backward(&mut self, ex: &IndexedExample, rec: ForwardRecord, scale: f64) {
        let cfg = self.config.clone();
        let n_steps = rec.outputs.len() as f64;
        let k = rec.encoded.z.len();
        let mut dz = vec![vec![0.0; cfg.d_hidden]; k];
        let mut dh0 = vec![0.0; rec.encoded.h0.len()];
        let p = &mut self.params;
        let v = p.w_s.shape()[1];
        let dlogits = |probs: &[f64], gold: usize| -> Vec<f64> {
            let mut d: Vec<f64> = probs.iter().map(|q| q * scale / n_steps).collect();
            d[gold] -= scale / n_steps;
            d
        };

        if !cfg.ablation.has_decoder() {
            let (probs, gold) = &rec.outputs[0];
            let d = dlogits(probs, *gold);
            outer_acc(p.w_s.grad_mut(), v, &rec.encoded.h0, &d);
            mat_vec_acc(p.w_s.value().data(), v, &d, &mut dh0);
        } else {
            let dec = p.decoder.as_mut().expect("decoder");
            let e_t = p.e_target.as_mut().expect("target embeddings");
            let w_c = p.w_c.as_mut().expect("W_c");
            let mut dh_next = vec![0.0; cfg.d_decoder];
            let mut dc_next = vec![0.0; cfg.d_decoder];
            for (step, (probs, gold)) in rec.steps.iter().zip(&rec.outputs).rev() {
                let r = &step.record;
                let d = dlogits(probs, *gold);
                outer_acc(p.w_s.grad_mut(), v, &r.out, &d);
                let mut d_out = vec![0.0; cfg.d_decoder];
                mat_vec_acc(p.w_s.value().data(), v, &d, &mut d_out);
                for (g, o) in d_out.iter_mut().zip(&r.out) {
                    *g *= 1.0 - o * o;
                }
                outer_acc(w_c.grad_mut(), cfg.d_decoder, &r.hc, &d_out);
                let mut d_hc = vec![0.0; r.hc.len()];
                mat_vec_acc(w_c.value().data(), cfg.d_decoder, &d_out, &mut d_hc);
                let mut dh = d_hc.split_off(cfg.d_hidden);
                let d_ctx = d_hc;
                axpy(1.0, &dh_next, &mut dh);
                if let Some(w_a) = p.w_a.as_mut() {
                    let alpha = &step.alpha;
                    // c = Σ α_i z_i ; s_i = q·z_i ; q = h W_a
                    let d_alpha: Vec<f64> = rec.encoded.z.iter().map(|zi| dot(&d_ctx, zi)).collect();
                    let mean_da = dot(alpha, &d_alpha);
                    let mut dq = vec![0.0; cfg.d_hidden];
                    for (i, zi) in rec.encoded.z.iter().enumerate() {
                        let ds = alpha[i] * (d_alpha[i] - mean_da);
                        axpy(alpha[i], &d_ctx, &mut dz[i]);
                        axpy(ds, &r.query, &mut dz[i]);
                        axpy(ds, zi, &mut dq);
                    }
                    outer_acc(w_a.grad_mut(), cfg.d_hidden, &r.lstm.h, &dq);
                    mat_vec_acc(w_a.value().data(), cfg.d_hidden, &dq, &mut dh);
                }
                let g = dec.backward(&r.lstm, &dh, &dc_next);
                add_to_rows(e_t, &[r.prev], &g.dx);
                dh_next = g.dh_prev;
                dc_next = g.dc_prev;
            }
            dh0 = dh_next;
        }

        // h0 = mean(z) [· W_bridge]
        let d_mean = match p.w_bridge.as_mut() {
            Some(w) => {
                outer_acc(w.grad_mut(), cfg.d_decoder, &rec.encoded.mean, &dh0);
                let mut d = vec![0.0; cfg.d_hidden];
                mat_vec_acc(w.value().data(), cfg.d_decoder, &dh0, &mut d);
                d
            }
            None => dh0,
        };
        let inv = 1.0 / k as f64;
        for d in &mut dz {
            axpy(inv, &d_mean, d);
        }

        for ((record, zi), dzi) in rec.encoded.records.iter().zip(&rec.encoded.z).zip(&dz) {
            let dpre: Vec<f64> = dzi.iter().zip(zi).map(|(d, z)| d * (1.0 - z * z)).collect();
            outer_acc(p.w_in.grad_mut(), cfg.d_hidden, &record.x, &dpre);
            let mut dx = vec![0.0; record.x.len()];
            mat_vec_acc(p.w_in.value().data(), cfg.d_hidden, &dpre, &mut dx);
            if let Some(m) = &record.mask {
                dx.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
            }
            let ctx = &ex.contexts[record.context];
            let mut offset = 0;
            if let (Some(trace), Some(fwd), Some(bwd), Some(e)) =
                (&record.trace, p.path_fwd.as_mut(), p.path_bwd.as_mut(), p.e_nodes.as_mut())
            {
                let width = 2 * cfg.d_path;
                let dxs = bilstm_backward(fwd, bwd, trace, &dx[..width]);
                for (id, d) in ctx.path.iter().zip(&dxs) {
                    add_to_rows(e, &[*id], d);
                }
                offset = width;
            }
            if let Some(e) = p.e_source.as_mut() {
                let d = cfg.d_tokens;
                add_to_rows(e, &ctx.left, &dx[offset..offset + d]);
                add_to_rows(e, &ctx.right, &dx[offset + d..offset + 2 * d]);
            }
        }
    }
}

/// Returns `(α, c, q)` with `q = h W_a`.
fn attend(
    w_a: &Parameter,
    d_hidden: usize,
    h: &[f64],
    z: &[Vec<f64>],
    mask: Option<&[bool]>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), ModelError> {
    if z.is_empty() || mask.is_some_and(|m| !m.iter().any(|&b| b)) {
        return Err(ModelError::AllMasked);
    }
    let mut q = vec![0.0; d_hidden];
    vec_mat_acc(h, w_a.value().data(), d_hidden, &mut q);
    let mut alpha: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(i, zi)| match mask {
            Some(m) if !m[i] => f64::NEG_INFINITY,
            _ => dot(&q, zi),
        })
        .collect();
    softmax_in_place(&mut alpha);
    let mut c = vec![0.0; d_hidden];
    for (a, zi) in alpha.iter().zip(z) {
        axpy(*a, zi, &mut c);
    }
    Ok((alpha, c, q))
}
