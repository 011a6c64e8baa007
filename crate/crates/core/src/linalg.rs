//! Dense symmetric positive definite factorization in packed storage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Jitter levels tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Symmetric matrix stored as its packed lower triangle, row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedSym {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl PackedSym {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; row_start(n)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)` with `j <= i`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i);
        self.data[row_start(i) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i);
        self.data[row_start(i) + j] = v;
    }

    /// Symmetric access for any `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.get(i, j)
        } else {
            self.get(j, i)
        }
    }

    pub fn add_diagonal(&mut self, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.data[row_start(i) + i] += v;
        }
    }
}

/// Dot product with eight independent partial sums, so the loop pipelines
/// and vectorizes. The summation order is fixed, hence deterministic.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    factor: PackedSym,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes without modification.
    pub fn new(a: &PackedSym) -> Option<Self> {
        let n = a.n;
        let mut l = a.clone();
        for i in 0..n {
            let ri = row_start(i);
            for j in 0..=i {
                let rj = row_start(j);
                let (row_i, row_j) = (&l.data[ri..ri + j], &l.data[rj..rj + j]);
                let dot = dot(row_i, row_j);
                let v = l.data[ri + j] - dot;
                if j == i {
                    if !(v > 0.0) || !v.is_finite() {
                        return None;
                    }
                    l.data[ri + i] = libm::sqrt(v);
                } else {
                    l.data[ri + j] = v / l.data[rj + j];
                }
            }
        }
        Some(Self { factor: l, jitter: 0.0 })
    }

    /// Factorizes, adding increasing diagonal jitter from [`JITTER_LADDER`]
    /// until it succeeds.
    pub fn with_jitter(a: &PackedSym) -> Result<Self> {
        for &jitter in &JITTER_LADDER {
            let mut m = a.clone();
            if jitter > 0.0 {
                m.add_diagonal(&vec![jitter; a.n]);
            }
            if let Some(mut c) = Cholesky::new(&m) {
                c.jitter = jitter;
                return Ok(c);
            }
        }
        Err(Error::Factorization(format!(
            "{}x{} matrix not positive definite with jitter up to {:e}",
            a.n,
            a.n,
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    pub fn dim(&self) -> usize {
        self.factor.n
    }

    /// Diagonal jitter that was needed to factorize.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &PackedSym {
        &self.factor
    }

    /// Solves `L v = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let l = &self.factor.data;
        for i in 0..self.factor.n {
            let ri = row_start(i);
            let dot = dot(&l[ri..ri + i], &b[..i]);
            b[i] = (b[i] - dot) / l[ri + i];
        }
    }

    /// Solves `Lᵀ x = v` in place.
    pub fn backward_in_place(&self, v: &mut [f64]) {
        let l = &self.factor.data;
        for i in (0..self.factor.n).rev() {
            let ri = row_start(i);
            v[i] /= l[ri + i];
            let xi = v[i];
            for (vk, lik) in v[..i].iter_mut().zip(&l[ri..ri + i]) {
                *vk -= lik * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// `bᵀ A⁻¹ b`, computed as `|L⁻¹ b|²`.
    pub fn inv_quad(&self, b: &[f64]) -> f64 {
        let mut v = b.to_vec();
        self.forward_in_place(&mut v);
        dot(&v, &v)
    }
}
