//! Minimal dense linear algebra for the per-segment Gram matrices.
//!
//! The matrices involved are small (tens of rows), symmetric and positive
//! definite up to rounding, so a plain lower-triangular Cholesky with an
//! escalating diagonal jitter covers every solve, inverse and log-determinant
//! the crate needs.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::float::prelude::*;

/// Jitter ladder applied to the diagonal when a factorization fails.
/// First attempt runs unmodified, then 1e-10 escalating x100 up to 1e-6.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Dense symmetric matrix in row-major storage.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Build from a row-major slice of length `n * n`.
    pub fn from_rows(n: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), n * n);
        SymMatrix {
            n,
            data: rows.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Set both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[i] = acc;
        }
        out
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^T = A + jitter I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    /// Reciprocal factor diagonal; triangular solves multiply by this
    /// instead of dividing per row.
    inv_diag: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factor `A` directly, without jitter. Returns `None` if a pivot is not
    /// strictly positive.
    pub fn new(a: &SymMatrix) -> Option<Self> {
        Self::with_jitter(a, 0.0)
    }

    fn with_jitter(a: &SymMatrix, jitter: f64) -> Option<Self> {
        let n = a.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a.get(i, j);
                if i == j {
                    sum += jitter;
                }
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        let inv_diag = (0..n).map(|i| 1.0 / l[i * n + i]).collect();
        Some(Cholesky {
            n,
            l,
            inv_diag,
            jitter,
        })
    }

    /// Factor `A`, escalating through [`JITTER_LADDER`] on failure.
    pub fn new_jittered(a: &SymMatrix) -> Option<Self> {
        for &jitter in &JITTER_LADDER {
            if let Some(ch) = Self::with_jitter(a, jitter) {
                return Some(ch);
            }
        }
        None
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was added to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Solve `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut sum = b[i];
            for k in 0..i {
                sum -= row[k] * b[k];
            }
            b[i] = sum * self.inv_diag[i];
        }
    }

    /// Solve `L^T x = y` in place.
    pub fn solve_upper(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * y[k];
            }
            y[i] = sum * self.inv_diag[i];
        }
    }

    /// Solve `(A + jitter I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        self.solve_lower(&mut x);
        self.solve_upper(&mut x);
        x
    }

    /// `log |A + jitter I|` from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.l(i, i).ln();
        }
        2.0 * acc
    }

    /// Full symmetric inverse via `A^-1 = L^-T L^-1`: invert the triangular
    /// factor row by row, then accumulate the product one factor row at a
    /// time. Both passes walk rows of contiguous storage.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        let mut m = vec![0.0; n * n]; // L^-1, lower triangular
        for i in 0..n {
            let (done, rest) = m.split_at_mut(i * n);
            let l_row = &self.l[i * n..i * n + i];
            for j in 0..i {
                let mut sum = 0.0;
                for k in j..i {
                    sum += l_row[k] * done[k * n + j];
                }
                rest[j] = -self.inv_diag[i] * sum;
            }
            rest[i] = self.inv_diag[i];
        }
        let mut inv = SymMatrix::zeros(n);
        for k in 0..n {
            let row = &m[k * n..k * n + k + 1];
            for i in 0..=k {
                let ri = row[i];
                let out = &mut inv.data[i * n..i * n + i + 1];
                for j in 0..=i {
                    out[j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv.data[j * n + i] = inv.data[i * n + j];
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> SymMatrix {
        // A = M M^T for M = [[2,0,0],[1,3,0],[0,1,1]]
        SymMatrix::from_rows(3, &[4.0, 2.0, 0.0, 2.0, 10.0, 3.0, 0.0, 3.0, 2.0])
    }

    #[test]
    fn factor_solve_roundtrip() {
        let a = spd3();
        let ch = Cholesky::new(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = ch.solve(&b);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn log_det_matches_product_of_pivots() {
        let a = spd3();
        let ch = Cholesky::new(&a).unwrap();
        // |A| = |M|^2 = (2*3*1)^2 = 36
        assert!((ch.log_det() - 36.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = spd3();
        let inv = Cholesky::new(&a).unwrap().inverse();
        for i in 0..3 {
            let ei = a.mul_vec(&inv.as_slice()[i * 3..(i + 1) * 3]);
            for (j, v) in ei.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SymMatrix::from_rows(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Cholesky::new(&a).is_none());
        assert!(Cholesky::new_jittered(&a).is_none());
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        // Rank-1 Gram matrix; exact zero pivot at the second column.
        let a = SymMatrix::from_rows(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(Cholesky::new(&a).is_none());
        let ch = Cholesky::new_jittered(&a).expect("ladder should rescue");
        assert!(ch.jitter() > 0.0);
        assert!(ch.jitter() <= 1e-6);
    }
}
