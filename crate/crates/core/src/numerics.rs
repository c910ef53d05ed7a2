//! Dense linear algebra, activations, seeded randomness and a central
//! finite-difference gradient oracle.
//!
//! Everything here is `f64`. Vectors are plain `Vec<f64>` / `&[f64]`; matrices
//! are row-major [`Matrix`] values. The hot paths used by the recurrent cells
//! (`matvec_acc`, `transpose_matvec_acc`, `add_outer`) skip shape checks and
//! rely on `debug_assert!`; the checked variants return [`NumericsError`].

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Vector = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    InvalidDim(usize),
    InvalidBound(f64),
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::DimensionMismatch { op, left, right } => write!(
                f,
                "dimension mismatch in {}: {}x{} vs {}x{}",
                op, left.0, left.1, right.0, right.1
            ),
            NumericsError::InvalidDim(d) => write!(f, "invalid dimension {}", d),
            NumericsError::InvalidBound(b) => write!(f, "invalid sampling bound {}", b),
        }
    }
}

impl std::error::Error for NumericsError {}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Matrix with every entry drawn from `uniform[-bound, bound]`, row by row.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vector, NumericsError> {
        if v.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_acc(v, &mut out);
        Ok(out)
    }

    /// `out += self · v`, unchecked.
    pub fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, v);
        }
    }

    /// `out += selfᵀ · v`, unchecked.
    pub fn transpose_matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        if self.cols == 0 {
            return;
        }
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vi != 0.0 {
                for (o, &m) in out.iter_mut().zip(row) {
                    *o += vi * m;
                }
            }
        }
    }

    /// `self += a ⊗ b`, unchecked.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        if self.cols == 0 {
            return;
        }
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ai != 0.0 {
                for (r, &bj) in row.iter_mut().zip(b) {
                    *r += ai * bj;
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn check_same(op: &'static str, a: &[f64], b: &[f64]) -> Result<(), NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::DimensionMismatch {
            op,
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    Ok(())
}

pub fn add(a: &[f64], b: &[f64]) -> Result<Vector, NumericsError> {
    check_same("add", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vector, NumericsError> {
    check_same("hadamard", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

pub fn scale(a: &[f64], k: f64) -> Vector {
    a.iter().map(|x| x * k).collect()
}

pub fn outer_product(a: &[f64], b: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(a.len(), b.len());
    m.add_outer(a, b);
    m
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vector {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

pub fn tanh_elem(x: &[f64]) -> Vector {
    x.iter().map(|v| v.tanh()).collect()
}

/// Softmax with the maximum subtracted before exponentiation.
pub fn softmax(x: &[f64]) -> Vector {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Deterministic generator. Owns its stream; there is no global RNG anywhere
/// in the crate.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent generator keyed by `(seed, key)`; the parent stream is not
    /// advanced.
    pub fn derived(seed: u64, key: &[u8]) -> Self {
        Rng::new(seed ^ fnv1a64(key).rotate_left(17))
    }

    /// Sample in the closed interval `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.gen_bool(p)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Vector of `dim` components drawn from `uniform[-bound, +bound]`.
pub fn uniform_vector(rng: &mut Rng, dim: usize, bound: f64) -> Result<Vector, NumericsError> {
    if dim == 0 {
        return Err(NumericsError::InvalidDim(dim));
    }
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(NumericsError::InvalidBound(bound));
    }
    Ok((0..dim).map(|_| rng.uniform(-bound, bound)).collect())
}

/// `sqrt(3 / fan)`: the half-width of a uniform distribution with variance `1/fan`.
pub fn uniform_bound(fan: usize) -> f64 {
    (3.0 / fan as f64).sqrt()
}

pub const DEFAULT_FD_EPSILON: f64 = 1e-5;

/// Central-difference gradient `(f(θ+ε) − f(θ−ε)) / 2ε` for every entry of
/// `params`. `params` is restored to its original values on return.
pub fn finite_diff_grad<F>(mut f: F, params: &mut [f64], epsilon: f64) -> Vector
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + epsilon;
        let plus = f(params);
        params[i] = orig - epsilon;
        let minus = f(params);
        params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * epsilon);
    }
    grad
}

/// `|a − b| / max(|a|, |b|, floor)`.
///
/// The floor keeps entries whose true gradient is essentially zero from
/// reporting finite-difference noise as a large relative error.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        assert!((sigmoid(&[100.0])[0] - 1.0).abs() < 1e-12);
        // 1/(1+e) and e/(1+e) from a 30-digit mpmath evaluation
        let s = sigmoid(&[-1.0, 1.0]);
        assert!((s[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((s[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
        for &x in &[-700.0, -3.2, 0.1, 44.0] {
            let a = sigmoid_scalar(x) + sigmoid_scalar(-x);
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_values() {
        assert_eq!(tanh_elem(&[0.0]), vec![0.0]);
        assert!((tanh_elem(&[1.0])[0] - 0.761_594_155_955_764_9).abs() < 1e-15);
        let t = tanh_elem(&[0.37, -0.37]);
        assert_eq!(t[0], -t[1]);
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[2.5; 4]);
        for v in &p {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-300_f64.max(1e-12));
        let x = [0.3, -1.2, 4.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 123.0).collect();
        for (a, b) in softmax(&x).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_algebra_basics() {
        let v = vec![1.5, -2.0, 3.0];
        assert_eq!(Matrix::identity(3).matvec(&v).unwrap(), v);
        assert_eq!(Matrix::zeros(2, 3).matvec(&v).unwrap(), vec![0.0, 0.0]);
        assert_eq!(hadamard(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![3.0, 8.0]);
        let err = Matrix::zeros(2, 3).matvec(&[1.0]).unwrap_err();
        assert_eq!(err.to_string(), "dimension mismatch in matvec: 2x3 vs 1x1");
        assert!(add(&[1.0], &[1.0, 2.0]).is_err());
        let o = outer_product(&[1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(o.as_slice(), &[3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
        assert_eq!(scale(&[1.0, -2.0], 0.5), vec![0.5, -1.0]);
    }

    #[test]
    fn transpose_matvec_matches_explicit_transpose() {
        let mut rng = Rng::new(3);
        let m = Matrix::uniform(3, 4, 1.0, &mut rng);
        let v = vec![0.2, -0.5, 1.1];
        let mut out = vec![0.0; 4];
        m.transpose_matvec_acc(&v, &mut out);
        for c in 0..4 {
            let expect: f64 = (0..3).map(|r| m.get(r, c) * v[r]).sum();
            assert!((out[c] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_vector_bounds() {
        let mut rng = Rng::new(11);
        let b = uniform_bound(300);
        assert_eq!(b, 0.1);
        let v = uniform_vector(&mut rng, 300, b).unwrap();
        assert!(v.iter().all(|x| (-0.1..=0.1).contains(x)));
        assert_eq!(uniform_bound(3), 1.0);
        let v = uniform_vector(&mut rng, 3, 1.0).unwrap();
        assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(uniform_vector(&mut rng, 0, 1.0), Err(NumericsError::InvalidDim(0)));
        assert!(uniform_vector(&mut rng, 2, 0.0).is_err());
    }

    #[test]
    fn uniform_vector_seeding() {
        let a = uniform_vector(&mut Rng::new(5), 20, 0.5).unwrap();
        let b = uniform_vector(&mut Rng::new(5), 20, 0.5).unwrap();
        let c = uniform_vector(&mut Rng::new(6), 20, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_moments() {
        let mut rng = Rng::new(2024);
        let b = uniform_bound(300);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.uniform(-b, b)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.002);
        assert!((var - b * b / 3.0).abs() / (b * b / 3.0) < 0.05);
    }

    #[test]
    fn finite_differences() {
        let mut theta = [3.0];
        let g = finite_diff_grad(|p| p[0] * p[0], &mut theta, DEFAULT_FD_EPSILON);
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert_eq!(theta, [3.0]);
        let g = finite_diff_grad(|_| 4.2, &mut [1.0, 2.0], DEFAULT_FD_EPSILON);
        assert_eq!(g, vec![0.0, 0.0]);
    }
}
