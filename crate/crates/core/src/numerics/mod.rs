//! Dense 64-bit arithmetic, hand-derived gradients, initialization, dropout,
//! the optimizer and the binary checkpoint container.

mod checkpoint;
mod lstm;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use checkpoint::{decode_records, encode_records, CheckpointError, Payload, Record, RecordSet, FORMAT_VERSION, MAGIC};
pub use lstm::{bilstm_backward, bilstm_final_states, bilstm_forward, lstm_step, BiLstmTrace, LstmCache, LstmParams, StepGrads};
pub use tensor::{axpy, dot, mat_vec_acc, outer_acc, sigmoid, softmax_in_place, vec_mat_acc, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("index {index} out of range for length {len}")]
    InvalidIndex { index: usize, len: usize },
    #[error("empty sequence")]
    EmptySequence,
}

/// A trainable tensor with its gradient and momentum buffer. The three
/// tensors always share one shape; only their data is exposed mutably.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
    momentum: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Parameter {
        let zeros = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            grad: zeros.clone(),
            momentum: zeros,
            value,
        }
    }

    pub fn glorot<R: Rng + ?Sized>(name: impl Into<String>, shape: &[usize], rng: &mut R) -> Parameter {
        Parameter::new(name, glorot_uniform_init(shape, rng))
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Parameter {
        Parameter::new(name, Tensor::zeros(shape))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut [f64] {
        self.value.data_mut()
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.grad.data_mut()
    }

    pub fn momentum(&self) -> &Tensor {
        &self.momentum
    }

    pub fn momentum_mut(&mut self) -> &mut [f64] {
        self.momentum.data_mut()
    }

    /// Value and gradient borrowed together, for kernels that read one and
    /// accumulate into the other.
    pub fn value_and_grad_mut(&mut self) -> (&[f64], &mut [f64]) {
        (self.value.data(), self.grad.data_mut())
    }

    pub fn set_value(&mut self, t: Tensor) -> Result<(), NumericsError> {
        self.check_shape(&t)?;
        self.value = t;
        Ok(())
    }

    pub fn set_momentum(&mut self, t: Tensor) -> Result<(), NumericsError> {
        self.check_shape(&t)?;
        self.momentum = t;
        Ok(())
    }

    fn check_shape(&self, t: &Tensor) -> Result<(), NumericsError> {
        if t.shape() != self.value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "assign",
                left: self.value.shape().to_vec(),
                right: t.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn has_grad(&self) -> bool {
        self.grad.data().iter().any(|&g| g != 0.0)
    }
}

/// Uniform on `[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`. For rank >= 2,
/// fan_in is the trailing dim and fan_out the leading one; vectors use their
/// length for both.
pub fn glorot_uniform_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let limit = glorot_limit(shape);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape")
}

pub fn glorot_limit(shape: &[usize]) -> f64 {
    assert!(!shape.is_empty(), "glorot needs at least one dim");
    let (fan_in, fan_out) = if shape.len() == 1 {
        (shape[0], shape[0])
    } else {
        (shape[shape.len() - 1], shape[0])
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`. Returns `None` when dropout is a no-op, without touching
/// the rng.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R, training: bool) -> Option<Vec<f64>> {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} not in [0, 1)");
    if !training || rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R, training: bool) -> Tensor {
    match dropout_mask(x.len(), rate, rng, training) {
        None => x.clone(),
        Some(mask) => {
            let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            Tensor::new(x.shape().to_vec(), data).expect("same shape")
        }
    }
}

/// `-ln p[target]`.
pub fn cross_entropy(p: &[f64], target: usize) -> Result<f64, NumericsError> {
    let q = *p.get(target).ok_or(NumericsError::InvalidIndex {
        index: target,
        len: p.len(),
    })?;
    Ok(-q.ln())
}

/// Mean cross-entropy over the non-padded rows (`None` targets contribute
/// nothing). Returns 0 when every row is padding.
pub fn masked_mean_cross_entropy(rows: &[&[f64]], targets: &[Option<usize>]) -> Result<f64, NumericsError> {
    if rows.len() != targets.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "cross_entropy",
            left: vec![rows.len()],
            right: vec![targets.len()],
        });
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in rows.iter().zip(targets) {
        if let Some(t) = t {
            sum += cross_entropy(p, *t)?;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Nesterov momentum in the reformulated form that needs no look-ahead
/// evaluation:
///
/// ```text
/// buf <- mu * buf - lr * g
/// theta <- theta + mu * buf - lr * g
/// ```
///
/// With `mu = 0` this is plain SGD.
pub fn nesterov_update(p: &mut Parameter, lr: f64, mu: f64) {
    let Parameter {
        value, grad, momentum, ..
    } = p;
    for ((theta, buf), &g) in value.data_mut().iter_mut().zip(momentum.data_mut()).zip(grad.data()) {
        *buf = mu * *buf - lr * g;
        *theta += mu * *buf - lr * g;
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<'a>(params: impl IntoIterator<Item = &'a mut Parameter>, max_norm: f64) -> f64 {
    let params: Vec<&mut Parameter> = params.into_iter().collect();
    let norm = params
        .iter()
        .flat_map(|p| p.grad.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds() {
        assert_eq!(glorot_limit(&[3, 3]), 1.0);
        assert_eq!(glorot_limit(&[2, 4]), 1.0);
        assert_eq!(glorot_limit(&[3]), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = glorot_uniform_init(&[3, 3], &mut rng);
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn glorot_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = glorot_uniform_init(&[1000, 1000], &mut rng);
        let limit = glorot_limit(&[1000, 1000]);
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.01 * limit, "{mean}");
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        // variance of U(-L, L) is L^2 / 3
        assert!((var - limit * limit / 3.0).abs() < 0.01 * limit * limit);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng, true), x);
        assert_eq!(dropout(&x, 0.9, &mut rng, false), x);
    }

    #[test]
    fn dropout_survivor_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::new(vec![1_000_000], vec![1.0; 1_000_000]).unwrap();
        let y = dropout(&x, 0.25, &mut rng, true);
        let survivors = y.data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / 1e6;
        assert!((frac - 0.75).abs() < 0.002, "{frac}");
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn cross_entropy_cases() {
        let v = 7;
        let uniform = vec![1.0 / v as f64; v];
        assert!((cross_entropy(&uniform, 3).unwrap() - (v as f64).ln()).abs() < 1e-12);
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!(matches!(
            cross_entropy(&[1.0], 1),
            Err(NumericsError::InvalidIndex { index: 1, len: 1 })
        ));
    }

    #[test]
    fn masked_mean_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                let mut r: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
                softmax_in_place(&mut r);
                r
            })
            .collect();
        let targets = [Some(0), Some(4), None, Some(2), None, Some(1)];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let got = masked_mean_cross_entropy(&refs, &targets).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for i in 0..6 {
            if let Some(t) = targets[i] {
                sum -= rows[i][t].ln();
                n += 1.0;
            }
        }
        assert!((got - sum / n).abs() < 1e-12);
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        // loss = sum(x W) => dW[i][j] = x[i]
        let x = [0.5, -1.0, 2.0];
        let mut w = Parameter::zeros("w", &[3, 2]);
        outer_acc(w.grad_mut(), 2, &x, &[1.0, 1.0]);
        assert_eq!(w.grad().data(), &[0.5, 0.5, -1.0, -1.0, 2.0, 2.0]);
        outer_acc(w.grad_mut(), 2, &x, &[1.0, 1.0]);
        assert_eq!(w.grad().data(), &[1.0, 1.0, -2.0, -2.0, 4.0, 4.0]);
        w.zero_grad();
        assert!(!w.has_grad());
    }

    #[test]
    fn nesterov_without_momentum_is_sgd() {
        let mut p = Parameter::new("p", Tensor::from_vec(vec![1.0, -1.0]));
        p.grad_mut().copy_from_slice(&[0.5, 2.0]);
        nesterov_update(&mut p, 0.1, 0.0);
        assert_eq!(p.value().data(), &[1.0 - 0.05, -1.0 - 0.2]);
    }

    #[test]
    fn nesterov_zero_gradient_settles() {
        let mut p = Parameter::new("p", Tensor::from_vec(vec![1.0]));
        p.momentum_mut()[0] = 1.0;
        let mut last = p.value().data()[0];
        for _ in 0..2000 {
            nesterov_update(&mut p, 0.01, 0.95);
            last = p.value().data()[0];
        }
        // remaining drift is a geometric tail of the decayed buffer
        assert!(p.momentum().data()[0].abs() < 1e-40);
        let before = last;
        nesterov_update(&mut p, 0.01, 0.95);
        assert_eq!(p.value().data()[0], before);
        // theta moved by sum_{t>=1} mu^(t+1) = mu^2 / (1 - mu) = 18.05
        assert!((last - 19.05).abs() < 1e-9, "{last}");
    }

    #[test]
    fn nesterov_beats_sgd_on_quadratic_bowl() {
        // f(x, y) = 0.5 * (x^2 + 10 y^2)
        let grad = |v: &[f64]| [v[0], 10.0 * v[1]];
        let loss = |v: &[f64]| 0.5 * (v[0] * v[0] + 10.0 * v[1] * v[1]);
        let run = |mu: f64| {
            let mut p = Parameter::new("p", Tensor::from_vec(vec![3.0, 2.0]));
            for _ in 0..50 {
                let g = grad(p.value().data());
                p.grad_mut().copy_from_slice(&g);
                nesterov_update(&mut p, 0.01, mu);
            }
            loss(p.value().data())
        };
        let sgd = run(0.0);
        let nag = run(0.95);
        assert!(nag < sgd, "nesterov {nag} vs sgd {sgd}");
    }

    #[test]
    fn clipping_scales_jointly() {
        let mut a = Parameter::zeros("a", &[1]);
        let mut b = Parameter::zeros("b", &[1]);
        a.grad_mut()[0] = 3.0;
        b.grad_mut()[0] = 4.0;
        let norm = clip_grad_norm([&mut a, &mut b], 1.0);
        assert_eq!(norm, 5.0);
        assert!((a.grad().data()[0] - 0.6).abs() < 1e-15);
        assert!((b.grad().data()[0] - 0.8).abs() < 1e-15);
    }
}
