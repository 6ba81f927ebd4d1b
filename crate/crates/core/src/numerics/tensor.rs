use std::fmt;

use super::NumericsError;

/// Dense row-major tensor of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NumericsError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NumericsError::InvalidShape(shape));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(mismatch("new", &shape, &[data.len()]));
        }
        if cfg!(debug_assertions) {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(NumericsError::NonFinite(format!("entry {i} is {}", data[i])));
            }
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(!shape.is_empty() && !shape.contains(&0), "invalid shape {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Tensor {
        Tensor::new(vec![data.len()], data).expect("non-empty finite vector")
    }

    pub fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Width of a matrix row; 1 for vectors.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product. A 1-d left operand is treated as a row vector and the
    /// result is 1-d.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        match (self.shape.len(), rhs.shape.len()) {
            (1, 2) if self.shape[0] == rhs.shape[0] => {
                let mut out = vec![0.0; rhs.shape[1]];
                vec_mat_acc(&self.data, &rhs.data, rhs.shape[1], &mut out);
                Ok(Tensor::from_vec(out))
            }
            (2, 2) if self.shape[1] == rhs.shape[0] => {
                let (n, m) = (self.shape[0], rhs.shape[1]);
                let mut out = vec![0.0; n * m];
                for i in 0..n {
                    vec_mat_acc(self.row(i), &rhs.data, m, &mut out[i * m..(i + 1) * m]);
                }
                Tensor::new(vec![n, m], out)
            }
            _ => Err(mismatch("matmul", &self.shape, &rhs.shape)),
        }
    }

    /// Concatenates 1-d tensors.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor, NumericsError> {
        let mut data = Vec::new();
        for p in parts {
            if p.shape.len() != 1 {
                return Err(mismatch("concat", &p.shape, &[]));
            }
            data.extend_from_slice(&p.data);
        }
        if data.is_empty() {
            return Err(NumericsError::InvalidShape(vec![0]));
        }
        Ok(Tensor::from_vec(data))
    }

    fn zip_with(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumericsError> {
        if self.shape != rhs.shape {
            return Err(mismatch(op, &self.shape, &rhs.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// Softmax along `axis` (0 for vectors; 0 or 1 for matrices).
    pub fn softmax(&self, axis: usize) -> Result<Tensor, NumericsError> {
        let mut out = self.clone();
        match (self.shape.len(), axis) {
            (1, 0) => softmax_in_place(&mut out.data),
            (2, 1) => {
                for r in 0..self.shape[0] {
                    softmax_in_place(out.row_mut(r));
                }
            }
            (2, 0) => {
                let (n, m) = (self.shape[0], self.shape[1]);
                let mut col = vec![0.0; n];
                for j in 0..m {
                    for i in 0..n {
                        col[i] = self.data[i * m + j];
                    }
                    softmax_in_place(&mut col);
                    for i in 0..n {
                        out.data[i * m + j] = col[i];
                    }
                }
            }
            _ => return Err(mismatch("softmax", &self.shape, &[axis])),
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax. Entries equal to `-inf` get probability 0; at
/// least one entry must be finite.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max.is_finite(), "softmax needs a finite entry");
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `out += x · W` where `W` is `x.len() x cols`, row-major.
#[inline]
pub fn vec_mat_acc(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    debug_assert_eq!(w.len(), x.len() * cols);
    debug_assert_eq!(out.len(), cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `dx += W · dy` (the transpose product used in backward passes).
#[inline]
pub fn mat_vec_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), dx.len() * cols);
    for (i, d) in dx.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        let mut s = 0.0;
        for (&wij, &g) in row.iter().zip(dy) {
            s += wij * g;
        }
        *d += s;
    }
}

/// `G += x ⊗ dy` for a `x.len() x cols` gradient matrix.
#[inline]
pub fn outer_acc(g: &mut [f64], cols: usize, x: &[f64], dy: &[f64]) {
    debug_assert_eq!(g.len(), x.len() * cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut g[i * cols..(i + 1) * cols];
        for (gij, &d) in row.iter_mut().zip(dy) {
            *gij += xi * d;
        }
    }
}

pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
