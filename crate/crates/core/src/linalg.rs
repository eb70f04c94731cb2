//! Small dense/sparse complex matrix helpers shared by the generators.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest elementwise modulus of `m - m†`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†) / 2` in place.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
        m[(j, j)] = C64::new(m[(j, j)].re, 0.0);
    }
}

/// Zero subnormal components; slowly decaying modes otherwise end up in
/// denormal arithmetic, which is orders of magnitude slower.
pub fn flush_subnormals(m: &mut CMatrix) {
    for z in m.iter_mut() {
        if z.re.is_subnormal() {
            z.re = 0.0;
        }
        if z.im.is_subnormal() {
            z.im = 0.0;
        }
    }
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Indices whose row or column holds a nonzero entry.
pub fn support(m: &CMatrix) -> Vec<usize> {
    let n = m.nrows();
    let zero = C64::new(0.0, 0.0);
    (0..n)
        .filter(|&s| (0..n).any(|t| m[(s, t)] != zero || m[(t, s)] != zero))
        .collect()
}

/// Smallest eigenvalue of a Hermitian matrix, diagonalising only the block
/// on its support; the remaining eigenvalues are exactly zero.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let idx = support(m);
    if idx.is_empty() {
        return 0.0;
    }
    let block = CMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
    let low = hermitian_eigenvalues(&block)[0];
    if idx.len() < m.nrows() {
        low.min(0.0)
    } else {
        low
    }
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Sparse square matrix stored as `(row, col, value)` triplets.
#[derive(Clone, Debug, Default)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseMatrix {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        SparseMatrix {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            out[(i, j)] += v;
        }
        out
    }

    /// `self * rho`.
    pub fn mul_left(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim;
        let mut out = CMatrix::zeros(n, n);
        for &(i, k, v) in &self.entries {
            for j in 0..n {
                out[(i, j)] += v * rho[(k, j)];
            }
        }
        out
    }

    /// `-i [self, rho]` for Hermitian `self` and Hermitian `rho`, using
    /// `rho * self = (self * rho)†`.
    pub fn von_neumann(&self, rho: &CMatrix) -> CMatrix {
        let m = self.mul_left(rho);
        let n = self.dim;
        CMatrix::from_fn(n, n, |i, j| -I * (m[(i, j)] - m[(j, i)].conj()))
    }
}
