use rand::Rng;

use super::tensor::{mat_vec_acc, outer_acc, sigmoid, vec_mat_acc};
use super::{glorot_uniform_init, NumericsError, Parameter, Tensor};

/// LSTM cell. The four gate matrices are stored side by side in one
/// `(input + hidden) x 4·hidden` matrix with column blocks
/// `[input | forget | output | candidate]`, and one `4·hidden` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    input: usize,
    hidden: usize,
    pub w: Parameter,
    pub b: Parameter,
}

/// Everything a step keeps for its backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// `[x; mask ⊙ h_prev]`
    xh: Vec<f64>,
    /// activated gates, same block layout as the weights
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    mask: Option<Vec<f64>>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

impl LstmParams {
    /// Glorot-initialized gates (fans taken per gate block), zero biases
    /// except the forget gate at 1.0.
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: usize, rng: &mut R) -> LstmParams {
        let rows = input + hidden;
        let mut w = vec![0.0; rows * 4 * hidden];
        for gate in 0..4 {
            let block = glorot_uniform_init(&[rows, hidden], rng);
            for r in 0..rows {
                let dst = r * 4 * hidden + gate * hidden;
                w[dst..dst + hidden].copy_from_slice(block.row(r));
            }
        }
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmParams {
            input,
            hidden,
            w: Parameter::new(format!("{name}.w"), Tensor::new(vec![rows, 4 * hidden], w).expect("lstm w")),
            b: Parameter::new(format!("{name}.b"), Tensor::from_vec(b)),
        }
    }

    pub fn zeros(name: &str, input: usize, hidden: usize) -> LstmParams {
        LstmParams {
            input,
            hidden,
            w: Parameter::zeros(format!("{name}.w"), &[input + hidden, 4 * hidden]),
            b: Parameter::zeros(format!("{name}.b"), &[4 * hidden]),
        }
    }

    /// Rebuilds a cell from stored tensors, checking their shapes.
    pub fn from_parameters(w: Parameter, b: Parameter) -> Result<LstmParams, NumericsError> {
        let &[rows, cols] = w.shape() else {
            return Err(NumericsError::InvalidShape(w.shape().to_vec()));
        };
        if cols % 4 != 0 || rows <= cols / 4 || b.shape() != [cols] {
            return Err(NumericsError::ShapeMismatch {
                op: "lstm",
                left: w.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let hidden = cols / 4;
        Ok(LstmParams {
            input: rows - hidden,
            hidden,
            w,
            b,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn parameters(&self) -> [&Parameter; 2] {
        [&self.w, &self.b]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.w, &mut self.b]
    }

    /// One step. `mask` multiplies `h_prev` before the gate product; callers
    /// reuse one mask for every step of a sequence.
    pub fn forward(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64], mask: Option<&[f64]>) -> LstmCache {
        let n = self.hidden;
        debug_assert_eq!(x.len(), self.input);
        debug_assert_eq!(h_prev.len(), n);
        let mut xh = Vec::with_capacity(self.input + n);
        xh.extend_from_slice(x);
        match mask {
            Some(m) => xh.extend(h_prev.iter().zip(m).map(|(h, m)| h * m)),
            None => xh.extend_from_slice(h_prev),
        }
        let mut gates = self.b.value().data().to_vec();
        vec_mat_acc(&xh, self.w.value().data(), 4 * n, &mut gates);
        for v in &mut gates[..3 * n] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[3 * n..] {
            *v = v.tanh();
        }
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        let mut h = vec![0.0; n];
        for j in 0..n {
            let (i, f, o, g) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
        LstmCache {
            xh,
            gates,
            c_prev: c_prev.to_vec(),
            tanh_c,
            mask: mask.map(<[f64]>::to_vec),
            h,
            c,
        }
    }

    /// Backward through one step; accumulates into `w` and `b` gradients.
    pub fn backward(&mut self, cache: &LstmCache, dh: &[f64], dc: &[f64]) -> StepGrads {
        let n = self.hidden;
        let g = &cache.gates;
        let mut dpre = vec![0.0; 4 * n];
        let mut dc_prev = vec![0.0; n];
        for j in 0..n {
            let (i, f, o, cand) = (g[j], g[n + j], g[2 * n + j], g[3 * n + j]);
            let tc = cache.tanh_c[j];
            let d_o = dh[j] * tc;
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            let d_i = dct * cand;
            let d_g = dct * i;
            let d_f = dct * cache.c_prev[j];
            dc_prev[j] = dct * f;
            dpre[j] = d_i * i * (1.0 - i);
            dpre[n + j] = d_f * f * (1.0 - f);
            dpre[2 * n + j] = d_o * o * (1.0 - o);
            dpre[3 * n + j] = d_g * (1.0 - cand * cand);
        }
        outer_acc(self.w.grad_mut(), 4 * n, &cache.xh, &dpre);
        for (gb, d) in self.b.grad_mut().iter_mut().zip(&dpre) {
            *gb += d;
        }
        let mut dxh = vec![0.0; self.input + n];
        mat_vec_acc(self.w.value().data(), 4 * n, &dpre, &mut dxh);
        let mut dh_prev = dxh.split_off(self.input);
        if let Some(m) = &cache.mask {
            dh_prev.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
        }
        StepGrads {
            dx: dxh,
            dh_prev,
            dc_prev,
        }
    }

    /// Runs a whole sequence from zero state; returns one cache per step.
    pub fn run(&self, seq: &[&[f64]], mask: Option<&[f64]>) -> Vec<LstmCache> {
        let zero = vec![0.0; self.hidden];
        let mut caches: Vec<LstmCache> = Vec::with_capacity(seq.len());
        for x in seq {
            let cache = match caches.last() {
                None => self.forward(x, &zero, &zero, mask),
                Some(prev) => self.forward(x, &prev.h, &prev.c, mask),
            };
            caches.push(cache);
        }
        caches
    }

    /// Backpropagates `dh_last` from the final hidden state through every
    /// step; returns the input gradient of each step.
    pub fn backward_through_time(&mut self, caches: &[LstmCache], dh_last: &[f64]) -> Vec<Vec<f64>> {
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; self.hidden];
        let mut dxs = vec![Vec::new(); caches.len()];
        for (t, cache) in caches.iter().enumerate().rev() {
            let g = self.backward(cache, &dh, &dc);
            dxs[t] = g.dx;
            dh = g.dh_prev;
            dc = g.dc_prev;
        }
        dxs
    }
}

/// Checked single step returning `(h_t, c_t)`.
pub fn lstm_step(
    params: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    mask: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
    let n = params.hidden;
    let check = |len: usize, want: usize| {
        if len == want {
            Ok(())
        } else {
            Err(NumericsError::ShapeMismatch {
                op: "lstm_step",
                left: vec![len],
                right: vec![want],
            })
        }
    };
    check(x.len(), params.input)?;
    check(h_prev.len(), n)?;
    check(c_prev.len(), n)?;
    if let Some(m) = mask {
        check(m.len(), n)?;
    }
    let cache = params.forward(x, h_prev, c_prev, mask);
    Ok((cache.h, cache.c))
}

/// Forward and backward caches of a bidirectional run.
#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    fwd: Vec<LstmCache>,
    bwd: Vec<LstmCache>,
    /// `[forward h_last; backward h_first]`
    pub output: Vec<f64>,
}

pub fn bilstm_forward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    seq: &[&[f64]],
    mask_fwd: Option<&[f64]>,
    mask_bwd: Option<&[f64]>,
) -> Result<BiLstmTrace, NumericsError> {
    if seq.is_empty() {
        return Err(NumericsError::EmptySequence);
    }
    let f = fwd.run(seq, mask_fwd);
    let reversed: Vec<&[f64]> = seq.iter().rev().copied().collect();
    let b = bwd.run(&reversed, mask_bwd);
    let mut output = f.last().expect("non-empty").h.clone();
    output.extend_from_slice(&b.last().expect("non-empty").h);
    Ok(BiLstmTrace { fwd: f, bwd: b, output })
}

/// Returns the gradient for each input position, in sequence order.
pub fn bilstm_backward(fwd: &mut LstmParams, bwd: &mut LstmParams, trace: &BiLstmTrace, d_out: &[f64]) -> Vec<Vec<f64>> {
    let n = fwd.hidden;
    let mut dx = fwd.backward_through_time(&trace.fwd, &d_out[..n]);
    let dx_b = bwd.backward_through_time(&trace.bwd, &d_out[n..]);
    for (d, db) in dx.iter_mut().zip(dx_b.iter().rev()) {
        d.iter_mut().zip(db).for_each(|(a, b)| *a += b);
    }
    dx
}

/// `[h_L forward; h_1 backward]` without dropout.
pub fn bilstm_final_states(fwd: &LstmParams, bwd: &LstmParams, seq: &[&[f64]]) -> Result<Tensor, NumericsError> {
    Ok(Tensor::from_vec(bilstm_forward(fwd, bwd, seq, None, None)?.output))
}
