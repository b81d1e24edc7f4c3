//! Dense vector and matrix helpers.
//!
//! Every reduction here runs in a fixed order so results are bit-reproducible
//! across runs. Vectors are plain `[f64]` slices.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Inner product with four fixed accumulation lanes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
/// Euclidean norm computed as `m·‖x/m‖` with `m = max|x_j|`, so it stays
/// finite for any finite vector whose norm is representable.
pub fn norm_scaled(x: &[f64]) -> f64 {
    let m = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &mut [f64], factor: f64) {
    for v in a.iter_mut() {
        *v *= factor;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// `out = self * x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn scale(&mut self, factor: f64) {
        scale(&mut self.data, factor);
    }

    /// `self += other`, entrywise.
    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        all_finite(&self.data)
    }

    /// Largest absolute asymmetry `|m_rc - m_cr|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Outcome of [`spectral_norm_sq`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Estimate of the largest eigenvalue of `AᵀA`, i.e. `‖A‖₂²`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Squared spectral norm `‖A‖₂²` by power iteration on `AᵀA`.
///
/// Starts from the all-ones vector (normalized) and stops once the Rayleigh
/// quotient changes by less than [`POWER_TOL`] relative, or after
/// [`POWER_MAX_ITERS`] iterations.
pub fn spectral_norm_sq(a: &Matrix) -> PowerIteration {
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return PowerIteration {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let at = a.transpose();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; a.rows()];
    let mut w = vec![0.0; n];
    let mut value = 0.0;
    for it in 1..=POWER_MAX_ITERS {
        a.matvec_into(&v, &mut av);
        at.matvec_into(&av, &mut w);
        // v has unit norm, so ⟨v, AᵀA v⟩ = ‖Av‖².
        let next = norm_sq(&av);
        let wn = norm(&w);
        if wn == 0.0 {
            // v lies in the null space; A may still be nonzero elsewhere.
            if a.as_slice().iter().all(|&x| x == 0.0) {
                return PowerIteration {
                    value: 0.0,
                    iterations: it,
                    converged: true,
                };
            }
            // Restart from a deterministic, non-symmetric vector.
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = 1.0 + i as f64;
            }
            let s = norm(&v);
            scale(&mut v, 1.0 / s);
            continue;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if it > 1 && (next - value).abs() <= POWER_TOL * next.abs() {
            return PowerIteration {
                value: next,
                iterations: it,
                converged: true,
            };
        }
        value = next;
    }
    PowerIteration {
        value,
        iterations: POWER_MAX_ITERS,
        converged: false,
    }
}

/// Solves `m x = rhs` by LU with partial pivoting.
pub fn solve(m: &Matrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if m.rows() != m.cols() {
        return Err(LinalgError::DimensionMismatch {
            expected: m.rows(),
            actual: m.cols(),
        });
    }
    if rhs.len() != m.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: m.rows(),
            actual: rhs.len(),
        });
    }
    let lu = m.to_nalgebra().lu();
    let b = DVector::from_column_slice(rhs);
    let x = lu.solve(&b).ok_or(LinalgError::Singular)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::Singular);
    }
    Ok(x.iter().copied().collect())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m
        .to_nalgebra()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}
