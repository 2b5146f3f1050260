//! Small dense linear algebra: Cholesky factors that grow one row at a time,
//! triangular solves and an LU solver for the nonsymmetric systems of the
//! preference model. Matrices are row-major `Vec<f64>`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result};

/// Relative jitter levels tried, in order, after a plain factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor stored packed by rows, so that bordering
/// with a new row is a push.
#[derive(Debug, Clone, Default)]
pub struct PackedLower {
    n: usize,
    data: Vec<f64>,
}

impl PackedLower {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn row_start(i: usize) -> usize {
        i * (i + 1) / 2
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i && i < self.n);
        self.data[Self::row_start(i) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = Self::row_start(i);
        &self.data[s..s + i + 1]
    }

    /// Factorizes a dense symmetric matrix. Returns `None` if a pivot is not
    /// strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = PackedLower {
            n: 0,
            data: Vec::with_capacity(n * (n + 1) / 2),
        };
        let mut col = vec![0.0; n];
        for i in 0..n {
            col[..i].copy_from_slice(&a[i * n..i * n + i]);
            if !l.push_row(&col[..i], a[i * n + i]) {
                return None;
            }
        }
        Some(l)
    }

    /// Borders the factor with a new row/column of the underlying matrix:
    /// `cross` holds the covariances with the existing rows and `diag` the new
    /// diagonal entry. Returns `false` (leaving the factor untouched) if the
    /// new pivot is not strictly positive.
    pub fn push_row(&mut self, cross: &[f64], diag: f64) -> bool {
        assert_eq!(cross.len(), self.n);
        let start = self.data.len();
        self.data.extend_from_slice(cross);
        // forward substitution in place
        for j in 0..self.n {
            let (head, tail) = self.data.split_at_mut(start);
            let rj = &head[Self::row_start(j)..Self::row_start(j) + j + 1];
            let mut s = tail[j];
            for (k, &v) in rj[..j].iter().enumerate() {
                s -= v * tail[k];
            }
            tail[j] = s / rj[j];
        }
        let sq: f64 = self.data[start..].iter().map(|v| v * v).sum();
        let pivot = diag - sq;
        if !(pivot > 0.0) || !pivot.is_finite() {
            self.data.truncate(start);
            return false;
        }
        self.data.push(sqrt(pivot));
        self.n += 1;
        true
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let r = self.row(i);
            let mut s = b[i];
            for (k, &v) in r[..i].iter().enumerate() {
                s -= v * b[k];
            }
            b[i] = s / r[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let r = self.row(i);
            b[i] /= r[i];
            let bi = b[i];
            for (k, &v) in r[..i].iter().enumerate() {
                b[k] -= v * bi;
            }
        }
    }

    /// Multiplies `L z` for a vector `z` of matching length.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Cholesky factorization of a symmetric matrix with the jitter ladder
/// `JITTER_LADDER` scaled by `scale`. Returns the factor and the absolute
/// jitter that was added to the diagonal.
pub fn cholesky_with_jitter(a: &[f64], n: usize, scale: f64) -> Result<(PackedLower, f64)> {
    if let Some(l) = PackedLower::factor(a, n) {
        return Ok((l, 0.0));
    }
    let mut work = a.to_vec();
    let mut last = 0.0;
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        for i in 0..n {
            work[i * n + i] = a[i * n + i] + jitter;
        }
        if let Some(l) = PackedLower::factor(&work, n) {
            return Ok((l, jitter));
        }
        last = jitter;
    }
    Err(Error::Conditioning { jitter: last })
}

/// LU factorization with partial pivoting of a square row-major matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if !(pmax > 0.0) {
                return Err(Error::Conditioning { jitter: 0.0 });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / piv;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}
